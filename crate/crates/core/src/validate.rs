//! Fast self-checks run by `--mode validate`: gradient check, Adam trace,
//! TOPSIS re-derivation, replay-buffer statistics and PRR accounting.

use std::fmt;

use rand::Rng;

use crate::agent::{ReplayBuffer, StateVec, Transition};
use crate::baselines::{topsis_rank, CriterionSense, StaticPolicy, TopsisInput};
use crate::config::RunConfig;
use crate::engine::{run_evaluation, Policy};
use crate::error::Result;
use crate::hybrid::CommMode;
use crate::nn::{Adam, AdamConfig, ForwardCache, Gradients, Mlp};
use crate::rng::{stream_rng, SimRng};

/// Critical value of the chi-square distribution with 99 degrees of
/// freedom at the 99.9% level.
pub const CHI2_99_DF_999: f64 = 148.230;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<12} measured {:.3e} threshold {:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

fn check(name: &'static str, measured: f64, threshold: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        measured,
        threshold,
        detail,
    }
}

/// Analytic gradient under test: `(net, cache, upstream) -> gradients`.
pub type GradientFn = dyn Fn(&Mlp, &ForwardCache, &[f64]) -> Result<Gradients>;

pub fn analytic_gradient(net: &Mlp, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
    net.backward(cache, upstream)
}

fn param_mut(net: &mut Mlp, layer: usize, index: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights().len();
    if index < nw {
        &mut l.weights_mut()[index]
    } else {
        &mut l.bias_mut()[index - nw]
    }
}

fn grad_at(g: &Gradients, layer: usize, index: usize) -> f64 {
    let l = &g.layers[layer];
    let nw = l.weights().len();
    if index < nw {
        l.weights()[index]
    } else {
        l.bias()[index - nw]
    }
}

/// Largest relative error between `grad` and central finite differences of
/// `sum(output * c)` over random networks and random parameter probes.
pub fn max_gradient_error(
    dims: &[usize],
    nets: usize,
    probes: usize,
    h: f64,
    rng: &mut SimRng,
    grad: &GradientFn,
) -> Result<f64> {
    const BATCH: usize = 3;
    let mut worst = 0.0f64;
    for _ in 0..nets {
        let mut net = Mlp::he_uniform(dims, rng)?;
        for l in net.layers_mut() {
            for b in l.bias_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..BATCH * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..BATCH * net.out_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |n: &Mlp| -> Result<f64> {
            Ok(n.forward_batch(&x, BATCH)?.iter().zip(&c).map(|(o, c)| o * c).sum())
        };
        let cache = net.forward_cached(&x, BATCH)?;
        let g = grad(&net, &cache, &c)?;
        for _ in 0..probes {
            let layer = rng.random_range(0..net.layers().len());
            let n_params = net.layers()[layer].weights().len() + net.layers()[layer].bias().len();
            let index = rng.random_range(0..n_params);
            let orig = *param_mut(&mut net, layer, index);
            *param_mut(&mut net, layer, index) = orig + h;
            let up = objective(&net)?;
            *param_mut(&mut net, layer, index) = orig - h;
            let down = objective(&net)?;
            *param_mut(&mut net, layer, index) = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad_at(&g, layer, index);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

pub fn check_gradients_with(grad: &GradientFn) -> Result<CheckResult> {
    let mut rng = stream_rng(0x6772_6164, 0);
    let err = max_gradient_error(&[6, 8, 8, 4], 20, 100, 1e-5, &mut rng, grad)?;
    Ok(check(
        "gradient",
        err,
        1e-4,
        err < 1e-4,
        "max relative error, 20 nets x 100 probes".into(),
    ))
}

/// Adam on f(theta) = theta^2 from theta = 1 with lr 0.1, against the update
/// rule written out by hand.
pub fn check_adam() -> Result<CheckResult> {
    let cfg = AdamConfig::default();
    let mut net = Mlp::zeros(&[1, 1])?;
    net.layers_mut()[0].weights_mut()[0] = 1.0;
    let mut adam = Adam::new(&net, cfg);

    let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for t in 1..=10 {
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights_mut()[0] = 2.0 * net.layers()[0].weights()[0];
        adam.step(&mut net, &g, 0.1)?;

        let grad = 2.0 * theta;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        theta -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        worst = worst.max((theta - net.layers()[0].weights()[0]).abs());
    }
    Ok(check("adam", worst, 1e-10, worst <= 1e-10, "10-step scalar trace".into()))
}

/// Closeness by the textbook formulas, written independently of
/// [`topsis_rank`].
pub fn reference_closeness(m: &[[f64; 4]; 4], w: &[f64; 4], benefit: &[bool; 4]) -> [f64; 4] {
    let mut r = [[0.0; 4]; 4];
    for j in 0..4 {
        let norm = (m[0][j] * m[0][j] + m[1][j] * m[1][j] + m[2][j] * m[2][j] + m[3][j] * m[3][j]).sqrt();
        for i in 0..4 {
            r[i][j] = if norm == 0.0 { 0.0 } else { w[j] * m[i][j] / norm };
        }
    }
    let mut best = [0.0; 4];
    let mut worst = [0.0; 4];
    for j in 0..4 {
        let col = [r[0][j], r[1][j], r[2][j], r[3][j]];
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        let min = col.iter().cloned().fold(f64::MAX, f64::min);
        best[j] = if benefit[j] { max } else { min };
        worst[j] = if benefit[j] { min } else { max };
    }
    let mut out = [0.0; 4];
    for i in 0..4 {
        let mut dp = 0.0;
        let mut dm = 0.0;
        for j in 0..4 {
            dp += (r[i][j] - best[j]).powi(2);
            dm += (r[i][j] - worst[j]).powi(2);
        }
        let (dp, dm) = (dp.sqrt(), dm.sqrt());
        out[i] = if dp + dm == 0.0 { 0.5 } else { dm / (dp + dm) };
    }
    out
}

fn ranking(c: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    idx
}

pub fn check_topsis() -> Result<CheckResult> {
    let mut rng = stream_rng(0x7470_7369, 0);
    let mut worst = 0.0f64;
    let mut rank_failures = 0;
    for _ in 0..1000 {
        let mut m = [[0.0; 4]; 4];
        for row in &mut m {
            for x in row {
                *x = rng.random_range(0.0..10.0);
            }
        }
        let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
        let total: f64 = raw.iter().sum();
        let w = raw.map(|x| x / total);
        let benefit: [bool; 4] = std::array::from_fn(|_| rng.random_bool(0.5));
        let input = TopsisInput {
            matrix: m.iter().flatten().copied().collect(),
            alternatives: 4,
            weights: w.to_vec(),
            senses: benefit
                .iter()
                .map(|&b| if b { CriterionSense::Benefit } else { CriterionSense::Cost })
                .collect(),
        };
        let got = topsis_rank(&input)?;
        let want = reference_closeness(&m, &w, &benefit);
        for (a, b) in got.iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
        let col = rng.random_range(0..4);
        let scale = rng.random_range(0.1..100.0);
        let mut scaled = input.clone();
        for i in 0..4 {
            scaled.matrix[i * 4 + col] *= scale;
        }
        if ranking(&topsis_rank(&scaled)?) != ranking(&got) {
            rank_failures += 1;
        }
    }
    Ok(check(
        "topsis",
        worst,
        1e-12,
        worst <= 1e-12 && rank_failures == 0,
        format!("1000 random 4x4 matrices, {rank_failures} scale-invariance failures"),
    ))
}

fn numbered(i: usize) -> Transition {
    Transition {
        state: StateVec([i as f64, 0.0, 0.0, 0.0, 0.0, 0.0]),
        action: CommMode::SingleItsG5,
        reward: i as f64,
        next_state: StateVec::default(),
        terminal: false,
    }
}

/// Chi-square statistic of single-sample draws from a full buffer of 100.
pub fn replay_chi_square(draws: usize, rng: &mut SimRng) -> Result<f64> {
    let mut buf = ReplayBuffer::new(100);
    for i in 0..100 {
        buf.push(numbered(i));
    }
    let mut counts = [0usize; 100];
    for _ in 0..draws {
        counts[buf.sample(1, rng)?[0].reward as usize] += 1;
    }
    let expected = draws as f64 / 100.0;
    Ok(counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum())
}

pub fn check_replay() -> Result<CheckResult> {
    let chi2 = replay_chi_square(100_000, &mut stream_rng(0x6275_6666, 0))?;
    let mut eviction_ok = true;
    for n in 0..10 {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..n {
            buf.push(numbered(i));
        }
        let kept: Vec<usize> = buf.iter().map(|t| t.reward as usize).collect();
        let want: Vec<usize> = (n.saturating_sub(3)..n).collect();
        eviction_ok &= kept == want;
    }
    Ok(check(
        "replay",
        chi2,
        CHI2_99_DF_999,
        chi2 < CHI2_99_DF_999 && eviction_ok,
        format!("chi-square over 1e5 draws, eviction order {}", if eviction_ok { "ok" } else { "wrong" }),
    ))
}

/// Short single-ITS-G5 run: PRR equals SR target over messages sent, mode
/// counts add up and nothing is duplicated.
pub fn check_accounting(base: &RunConfig) -> Result<CheckResult> {
    let mut cfg = base.clone();
    cfg.agent.sr_target = 20;
    let (games, _) = run_evaluation(&cfg, Policy::Static(StaticPolicy::AlwaysItsG5), 3)?;
    let mut worst = 0.0f64;
    let mut ok = true;
    for g in &games {
        for a in &g.agents {
            worst = worst.max((a.prr - 20.0 / a.n_sent as f64).abs());
            ok &= a.mode_counts.iter().sum::<u64>() == a.n_sent && a.dup_pct() == 0.0;
        }
    }
    Ok(check(
        "accounting",
        worst,
        0.0,
        ok && worst == 0.0,
        "3 static ITS-G5 games, SR target 20".into(),
    ))
}

pub fn run_all(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_gradients_with(&analytic_gradient)?,
        check_adam()?,
        check_topsis()?,
        check_replay()?,
        check_accounting(cfg)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_check_passes() {
        assert!(check_gradients_with(&analytic_gradient).unwrap().passed);
    }

    #[test]
    fn injected_gradient_bug_is_caught() {
        let buggy = |net: &Mlp, cache: &ForwardCache, up: &[f64]| {
            let mut g = net.backward(cache, up)?;
            for x in g.layers[1].weights_mut() {
                *x *= 1.01;
            }
            Ok(g)
        };
        let r = check_gradients_with(&buggy).unwrap();
        assert!(!r.passed);
        assert!(r.measured > 1e-3, "{r}");
    }

    #[test]
    fn adam_and_topsis_and_replay() {
        for r in [check_adam().unwrap(), check_topsis().unwrap(), check_replay().unwrap()] {
            assert!(r.passed, "{r}");
        }
    }
}
