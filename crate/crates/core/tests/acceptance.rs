//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails.
//!
//! Run a subset by number: `cargo test --test acceptance -- 1 2 6`.

use std::cell::OnceCell;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use hybrid_v2x::agent::{AgentConfig, DqnAgent, ReplayBuffer, StateVec, Transition};
use hybrid_v2x::baselines::{topsis_rank, CriterionSense, Selector, TopsisInput};
use hybrid_v2x::config::{Congestion, RunConfig};
use hybrid_v2x::engine::{
    moving_average, moving_std, run_evaluation, run_training, selector_policy, trained_policy, Aggregate, GameStats,
};
use hybrid_v2x::hybrid::CommMode;
use hybrid_v2x::nn::{Adam, AdamConfig, Gradients, Mlp};
use hybrid_v2x::rng::stream_rng;
use hybrid_v2x::Result;

/// Training length of each trend run. Epsilon reaches its floor after about
/// three quarters of the games.
const TREND_GAMES: usize = 300;
const TREND_EPSILON_DECREMENT: f64 = 4e-5;
const TREND_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Evaluation games per seed; evaluation seeds are offset from training.
const EVAL_GAMES: usize = 20;
const EVAL_SEED_OFFSET: u64 = 1000;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

// 1. Backprop against central finite differences.

fn param(net: &mut Mlp, layer: usize, index: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights().len();
    if index < nw {
        &mut l.weights_mut()[index]
    } else {
        &mut l.bias_mut()[index - nw]
    }
}

fn grad(g: &Gradients, layer: usize, index: usize) -> f64 {
    let l = &g.layers[layer];
    let nw = l.weights().len();
    if index < nw {
        l.weights()[index]
    } else {
        l.bias()[index - nw]
    }
}

fn gradients() -> Result<Verdict> {
    const BATCH: usize = 4;
    const H: f64 = 1e-5;
    let started = Instant::now();
    let mut rng = stream_rng(0xacce_0001, 0);
    let dims = [6, 8, 8, 4];
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut net = Mlp::he_uniform(&dims, &mut rng)?;
        for l in net.layers_mut() {
            for b in l.bias_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..BATCH * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..BATCH * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective =
            |n: &Mlp| -> Result<f64> { Ok(n.forward_batch(&x, BATCH)?.iter().zip(&c).map(|(o, c)| o * c).sum()) };
        let analytic = net.backward(&net.forward_cached(&x, BATCH)?, &c)?;
        for _ in 0..100 {
            let layer = rng.random_range(0..3);
            let count = net.layers()[layer].weights().len() + net.layers()[layer].bias().len();
            let index = rng.random_range(0..count);
            let orig = *param(&mut net, layer, index);
            *param(&mut net, layer, index) = orig + H;
            let up = objective(&net)?;
            *param(&mut net, layer, index) = orig - H;
            let down = objective(&net)?;
            *param(&mut net, layer, index) = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = grad(&analytic, layer, index);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 10.0,
        format!("max relative error {worst:.2e} (< 1e-4) over 20 nets x 100 probes, {secs:.2} s (< 10 s)"),
    )
}

// 2. Adam against the update rule scripted by hand.

fn adam() -> Result<Verdict> {
    let mut net = Mlp::zeros(&[1, 1])?;
    net.layers_mut()[0].weights_mut()[0] = 1.0;
    let mut opt = Adam::new(&net, AdamConfig::default());
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
    let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for t in 1..=10 {
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights_mut()[0] = 2.0 * net.layers()[0].weights()[0];
        opt.step(&mut net, &g, lr)?;

        let grad = 2.0 * theta;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
        worst = worst.max((theta - net.layers()[0].weights()[0]).abs());
    }
    verdict(
        worst <= 1e-10,
        format!("max |theta - oracle| {worst:.2e} (<= 1e-10) over 10 steps, final theta {theta:.6}"),
    )
}

// 3. TOPSIS against a straight-line textbook version.

fn textbook_topsis(m: &[Vec<f64>], w: &[f64], benefit: &[bool]) -> Vec<f64> {
    let k = w.len();
    let norms: Vec<f64> = (0..k).map(|j| m.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt()).collect();
    let v: Vec<Vec<f64>> = m
        .iter()
        .map(|r| {
            (0..k)
                .map(|j| if norms[j] == 0.0 { 0.0 } else { w[j] * r[j] / norms[j] })
                .collect()
        })
        .collect();
    let column = |j: usize| v.iter().map(move |r| r[j]);
    let ideal: Vec<f64> = (0..k)
        .map(|j| {
            if benefit[j] {
                column(j).fold(f64::MIN, f64::max)
            } else {
                column(j).fold(f64::MAX, f64::min)
            }
        })
        .collect();
    let anti: Vec<f64> = (0..k)
        .map(|j| {
            if benefit[j] {
                column(j).fold(f64::MAX, f64::min)
            } else {
                column(j).fold(f64::MIN, f64::max)
            }
        })
        .collect();
    v.iter()
        .map(|r| {
            let dp = r.iter().zip(&ideal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dm = r.iter().zip(&anti).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dp + dm == 0.0 {
                0.5
            } else {
                dm / (dp + dm)
            }
        })
        .collect()
}

fn order(c: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    idx
}

fn topsis() -> Result<Verdict> {
    let mut rng = stream_rng(0xacce_0003, 0);
    let mut worst = 0.0f64;
    let mut rank_changes = 0;
    for _ in 0..1000 {
        let m: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.random_range(0.01..100.0)).collect()).collect();
        let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let benefit: Vec<bool> = (0..4).map(|_| rng.random_bool(0.5)).collect();
        let mut input = TopsisInput {
            matrix: m.concat(),
            alternatives: 4,
            weights: w.clone(),
            senses: benefit
                .iter()
                .map(|&b| if b { CriterionSense::Benefit } else { CriterionSense::Cost })
                .collect(),
        };
        let got = topsis_rank(&input)?;
        for (a, b) in got.iter().zip(textbook_topsis(&m, &w, &benefit)) {
            worst = worst.max((a - b).abs());
        }
        // Rescale every column by its own positive factor.
        for j in 0..4 {
            let s = rng.random_range(1e-3..1e3);
            for i in 0..4 {
                input.matrix[i * 4 + j] *= s;
            }
        }
        if order(&topsis_rank(&input)?) != order(&got) {
            rank_changes += 1;
        }
    }
    verdict(
        worst <= 1e-12 && rank_changes == 0,
        format!("max |closeness - textbook| {worst:.2e} (<= 1e-12), {rank_changes}/1000 rankings changed by column scaling"),
    )
}

// 4. Per-game accounting in every selector and preset.

fn check_games(games: &[GameStats], sr_target: u32, single_g5: bool, bad: &mut Vec<String>, label: &str) {
    for g in games {
        for (k, a) in g.agents.iter().enumerate() {
            let oracle = a.sr as f64 / a.n_sent as f64;
            if a.sr != sr_target || a.prr != oracle {
                bad.push(format!("{label} game {} agent {k}: prr {} vs {oracle}", g.game, a.prr));
            }
            if a.mode_counts.iter().sum::<u64>() != a.n_sent {
                bad.push(format!("{label} game {} agent {k}: mode counts {:?} vs n_sent {}", g.game, a.mode_counts, a.n_sent));
            }
            if single_g5 && (a.dup_pct() != 0.0 || a.mode_counts[0] != a.n_sent) {
                bad.push(format!("{label} game {} agent {k}: dup {}%", g.game, a.dup_pct()));
            }
        }
    }
}

fn accounting() -> Result<Verdict> {
    let mut bad = Vec::new();
    let mut runs = 0;
    let mut agent_games = 0;
    for congestion in Congestion::ALL {
        let mut cfg = RunConfig::default().with_congestion(congestion);
        cfg.seed = 40;
        cfg.games = 3;
        let target = cfg.agent.sr_target;
        let (trained, agents) = run_training(&cfg, |_| Ok(()))?;
        check_games(&trained, target, false, &mut bad, &format!("{congestion} drl-train"));
        let (greedy, _) = run_evaluation(&cfg, trained_policy(agents), 2)?;
        check_games(&greedy, target, false, &mut bad, &format!("{congestion} drl-eval"));
        runs += 2;
        agent_games += (trained.len() + greedy.len()) * cfg.scenario.platoon_size;
        for selector in Selector::ALL.into_iter().filter(|s| *s != Selector::Drl) {
            let (games, agg) = run_evaluation(&cfg, selector_policy(&cfg, selector, Path::new("."))?, 3)?;
            let single_g5 = selector == Selector::StaticG5;
            check_games(&games, target, single_g5, &mut bad, &format!("{congestion} {selector}"));
            if single_g5 && agg.dup_pct != 0.0 {
                bad.push(format!("{congestion} static-g5 aggregate dup {}%", agg.dup_pct));
            }
            runs += 1;
            agent_games += games.len() * cfg.scenario.platoon_size;
        }
    }
    let first = bad.first().cloned().unwrap_or_default();
    verdict(
        bad.is_empty(),
        format!("{runs} runs, {agent_games} agent-games, {} violations {first}", bad.len()),
    )
}

// 5. Replay buffer sampling and eviction.

fn numbered(i: usize) -> Transition {
    Transition {
        state: StateVec([0.0; 6]),
        action: CommMode::SingleItsG5,
        reward: i as f64,
        next_state: StateVec([0.0; 6]),
        terminal: false,
    }
}

/// Chi-square quantile via the Wilson–Hilferty approximation.
fn chi2_quantile(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

fn replay() -> Result<Verdict> {
    // Tabulated 99.9% point for 99 degrees of freedom.
    const CRITICAL: f64 = 148.230;
    const Z_999: f64 = 3.090_232;
    let approx = chi2_quantile(99.0, Z_999);
    let table_ok = (approx - CRITICAL).abs() < 0.5;

    let mut buf = ReplayBuffer::new(100);
    for i in 0..100 {
        buf.push(numbered(i));
    }
    let mut rng = stream_rng(0xacce_0005, 0);
    let draws = 100_000;
    let mut counts = [0u32; 100];
    for _ in 0..draws {
        counts[buf.sample(1, &mut rng)?[0].reward as usize] += 1;
    }
    let expected = draws as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();

    let mut eviction_ok = true;
    for n in 0..=12usize {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..n {
            buf.push(numbered(i));
        }
        let kept: Vec<usize> = buf.iter().map(|t| t.reward as usize).collect();
        let want: Vec<usize> = (n.saturating_sub(3)..n).collect();
        eviction_ok &= kept == want && buf.len() == n.min(3);
        if n >= 3 {
            let mut s: Vec<usize> = buf.sample(3, &mut rng)?.iter().map(|t| t.reward as usize).collect();
            s.sort_unstable();
            eviction_ok &= s == want;
        }
    }
    verdict(
        chi2 < CRITICAL && eviction_ok && table_ok,
        format!(
            "chi-square {chi2:.1} < {CRITICAL} (df 99, 99.9%; Wilson-Hilferty {approx:.1}), eviction order {}",
            if eviction_ok { "exact" } else { "WRONG" }
        ),
    )
}

// 6. Contextual bandit learned by the Q-agent.

fn bandit() -> Result<Verdict> {
    const STEPS: usize = 20_000;
    const TAIL: usize = 1000;
    let best = |feature: bool| if feature { CommMode::HybridRedundant } else { CommMode::SingleItsG5 };
    let started = Instant::now();
    let mut scores = Vec::new();
    for seed in 1..=3u64 {
        // Same learner as the simulator with narrower hidden layers; the
        // task needs little capacity and the width dominates run time.
        let config = AgentConfig {
            hidden_layers: vec![64, 64],
            ..AgentConfig::default()
        };
        let mut agent = DqnAgent::new(config, stream_rng(seed, 100))?;
        let mut env = stream_rng(seed, 7);
        let mut optimal = 0;
        for step in 0..STEPS {
            let feature = env.random_bool(0.5);
            let s = StateVec([if feature { 1.0 } else { 0.0 }, 0.0, 0.0, 0.0, 0.0, 0.0]);
            if step >= STEPS - TAIL && agent.act_greedy(&s)? == best(feature) {
                optimal += 1;
            }
            let action = agent.act(&s)?;
            agent.decay_epsilon();
            let reward = if action == best(feature) { 1.0 } else { 0.0 };
            agent.remember(Transition {
                state: s,
                action,
                reward,
                next_state: s,
                terminal: true,
            })?;
            agent.train()?;
        }
        scores.push(optimal as f64 / TAIL as f64);
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        scores.iter().all(|&s| s >= 0.95) && secs < 120.0,
        format!("greedy optimal share over last 1000 steps {scores:?} (>= 0.95 each), {secs:.1} s (< 120 s)"),
    )
}

// 7. Redundancy uplift under congestion.

fn uplift() -> Result<Verdict> {
    let selectors = [Selector::StaticG5, Selector::StaticLte, Selector::StaticRedundant];
    let mut prr = [0.0; 3];
    for seed in 1..=10u64 {
        let mut cfg = RunConfig::default().with_congestion(Congestion::High);
        cfg.seed = seed;
        for (i, sel) in selectors.into_iter().enumerate() {
            let (_, agg) = run_evaluation(&cfg, selector_policy(&cfg, sel, Path::new("."))?, EVAL_GAMES)?;
            prr[i] += agg.mean_prr / 10.0;
        }
    }
    let (g5, lte, red) = (prr[0], prr[1], prr[2]);
    verdict(
        red - g5 >= 0.10 && red - lte >= 0.10,
        format!(
            "high congestion, 10 seeds: redundant {:.1}% vs ITS-G5 {:.1}% (+{:.1} pp), LTE {:.1}% (+{:.1} pp), need +10 pp",
            100.0 * red,
            100.0 * g5,
            100.0 * (red - g5),
            100.0 * lte,
            100.0 * (red - lte)
        ),
    )
}

// 8-9. Trained agents against static redundancy.

fn trend_config(congestion: Congestion, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default().with_congestion(congestion);
    cfg.seed = seed;
    cfg.games = TREND_GAMES;
    cfg.agent.epsilon_decrement = TREND_EPSILON_DECREMENT;
    cfg
}

fn eval_config(cfg: &RunConfig) -> RunConfig {
    let mut ev = cfg.clone();
    ev.seed = cfg.seed + EVAL_SEED_OFFSET;
    ev
}

/// Greedy evaluation of agents trained in `congestion`, one per seed.
fn trained_in(congestion: Congestion) -> Result<Vec<Aggregate>> {
    TREND_SEEDS
        .iter()
        .map(|&seed| {
            let cfg = trend_config(congestion, seed);
            let (_, agents) = run_training(&cfg, |_| Ok(()))?;
            Ok(run_evaluation(&eval_config(&cfg), trained_policy(agents), EVAL_GAMES)?.1)
        })
        .collect()
}

fn mean_of(aggs: &[Aggregate], f: impl Fn(&Aggregate) -> f64) -> f64 {
    aggs.iter().map(f).sum::<f64>() / aggs.len() as f64
}

#[derive(Default)]
struct Trends {
    high: OnceCell<Vec<Aggregate>>,
    low: OnceCell<Vec<Aggregate>>,
}

impl Trends {
    fn get(&self, congestion: Congestion) -> Result<&[Aggregate]> {
        let cell = match congestion {
            Congestion::Low => &self.low,
            Congestion::High => &self.high,
        };
        if cell.get().is_none() {
            let _ = cell.set(trained_in(congestion)?);
        }
        Ok(cell.get().expect("just set"))
    }
}

fn duplication(trends: &Trends) -> Result<Verdict> {
    let drl = trends.get(Congestion::High)?;
    let redundant: Vec<Aggregate> = TREND_SEEDS
        .iter()
        .map(|&seed| {
            let ev = eval_config(&trend_config(Congestion::High, seed));
            Ok(run_evaluation(&ev, selector_policy(&ev, Selector::StaticRedundant, Path::new("."))?, EVAL_GAMES)?.1)
        })
        .collect::<Result<_>>()?;
    let (drl_dup, red_dup) = (mean_of(drl, |a| a.dup_pct), mean_of(&redundant, |a| a.dup_pct));
    let (drl_prr, red_prr) = (mean_of(drl, |a| a.mean_prr), mean_of(&redundant, |a| a.mean_prr));
    let gap = 100.0 * (drl_prr - red_prr);
    verdict(
        drl_dup <= red_dup / 3.0 && gap.abs() <= 5.0,
        format!(
            "high congestion, 5 seeds: dup {drl_dup:.1}% vs redundant {red_dup:.1}% (limit {:.1}%), PRR {:.1}% vs {:.1}% ({gap:+.1} pp, limit 5)",
            red_dup / 3.0,
            100.0 * drl_prr,
            100.0 * red_prr
        ),
    )
}

fn adaptive(trends: &Trends) -> Result<Verdict> {
    let high = mean_of(trends.get(Congestion::High)?, Aggregate::redundant_pct);
    let low = mean_of(trends.get(Congestion::Low)?, Aggregate::redundant_pct);
    verdict(
        high > low,
        format!("redundant share {low:.1}% (low) vs {high:.1}% (high), 5 seeds each"),
    )
}

// 10. Convergence of a full low-congestion training run.

fn convergence() -> Result<Verdict> {
    let cfg = RunConfig::default().with_congestion(Congestion::Low);
    let started = Instant::now();
    let (games, _) = run_training(&cfg, |_| Ok(()))?;
    let secs = started.elapsed().as_secs_f64();
    let n = games.len();
    let reward: Vec<f64> = games.iter().map(GameStats::mean_reward).collect();
    let prr: Vec<f64> = games.iter().map(GameStats::mean_prr).collect();
    let reward_ma = moving_average(&reward, 100)?;
    let reward_sd = moving_std(&reward, 100)?;
    let prr_ma = moving_average(&prr, 100)?;
    let settled = (99..n - 1).find(|&i| reward_sd[i] < 0.1 * reward_ma[i].abs());
    let rising = reward_ma[n - 1] >= reward_ma[99];
    let reliable = prr_ma[n - 1] >= 0.90;
    verdict(
        n == 1000 && rising && settled.is_some() && reliable && secs <= 1800.0,
        format!(
            "{n} games in {:.1} min (<= 30); reward MA {:.3} at game 100 -> {:.3} at {n}; std < 10% of mean from game {}; final PRR MA {:.3} (>= 0.90)",
            secs / 60.0,
            reward_ma[99],
            reward_ma[n - 1],
            settled.map_or("never".to_string(), |i| (i + 1).to_string()),
            prr_ma[n - 1]
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let trends = Trends::default();
    let criteria: [(&str, &dyn Fn() -> Result<Verdict>); 10] = [
        ("gradient correctness", &gradients),
        ("adam oracle", &adam),
        ("topsis oracle", &topsis),
        ("accounting exactness", &accounting),
        ("replay statistics", &replay),
        ("bandit learning sanity", &bandit),
        ("hybrid uplift under congestion", &uplift),
        ("duplication efficiency", &|| duplication(&trends)),
        ("congestion-adaptive redundancy", &|| adaptive(&trends)),
        ("convergence shape", &convergence),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let (passed, detail) = match run() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "[{}] {number:>2} {name}: {detail} [{:.1} s]",
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
