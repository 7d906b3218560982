use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde_json::json;

use hybrid_v2x::baselines::Selector;
use hybrid_v2x::config::{parse_config, Congestion, Overrides, RunConfig};
use hybrid_v2x::engine::{
    moving_average, run_evaluation, run_training, save_agents, selector_policy, Aggregate, GameStats,
};
use hybrid_v2x::output::{compare_csv, plot_data, svg_line_chart, write_file, CompareRow, GamesWriter};
use hybrid_v2x::{validate, Error, Result};

const MOVING_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Train,
    Eval,
    Compare,
    Validate,
}

/// Hybrid ITS-G5 / LTE-V2X communication-mode selection simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    mode: Mode,
    /// drl, static-g5, static-lte, static-redundant or topsis.
    #[arg(long)]
    selector: Option<Selector>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training games (train) or games per evaluation cell (eval, compare).
    #[arg(long)]
    games: Option<usize>,
    /// Background-traffic preset: low or high.
    #[arg(long)]
    congestion: Option<Congestion>,
    /// Output directory; also where DRL weights are read from.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let eval_mode = matches!(cli.mode, Mode::Eval | Mode::Compare);
    let overrides = Overrides {
        seed: cli.seed,
        games: if eval_mode { None } else { cli.games },
        selector: cli.selector,
        congestion: cli.congestion,
        output: cli.out.clone(),
    };
    let result = parse_config(cli.config.as_deref(), &overrides).and_then(|mut cfg| {
        if eval_mode {
            if let Some(n) = cli.games {
                cfg.eval_games = n;
                cfg.validate()?;
            }
        }
        match cli.mode {
            Mode::Train => cmd_train(&cfg),
            Mode::Eval => cmd_eval(&cfg),
            Mode::Compare => cmd_compare(&cfg),
            Mode::Validate => cmd_validate(&cfg),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn prepare_output(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_summary(cfg: &RunConfig, mode: &str, games: &[GameStats], wall: f64) -> Result<()> {
    let tail = &games[games.len().saturating_sub(MOVING_WINDOW)..];
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "mode": mode,
        "seed": cfg.seed,
        "selector": cfg.selector,
        "games": games.len(),
        "aggregate": Aggregate::from_games(games),
        "final_window": Aggregate::from_games(tail),
        "wall_time_s": wall,
        "config": cfg.to_json_value(),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Fault(e.to_string()))?;
    write_file(&cfg.output.join("summary.json"), &(text + "\n"))
}

fn write_plots(dir: &Path, games: &[GameStats]) -> Result<()> {
    let reward: Vec<f64> = games.iter().map(GameStats::mean_reward).collect();
    let prr: Vec<f64> = games.iter().map(GameStats::mean_prr).collect();
    let reward_ma = moving_average(&reward, MOVING_WINDOW)?;
    let prr_ma = moving_average(&prr, MOVING_WINDOW)?;
    write_file(&dir.join("reward.dat"), &plot_data("game", "reward_moving_average", &reward_ma))?;
    write_file(&dir.join("prr.dat"), &plot_data("game", "prr_moving_average", &prr_ma))?;
    write_file(
        &dir.join("reward.svg"),
        &svg_line_chart("Average reward per game (100-game moving average)", "game", "reward", &reward_ma),
    )?;
    write_file(
        &dir.join("prr.svg"),
        &svg_line_chart("Packet reception ratio (100-game moving average)", "game", "PRR", &prr_ma),
    )
}

fn cmd_train(cfg: &RunConfig) -> Result<ExitCode> {
    if cfg.selector != Selector::Drl {
        return Err(Error::Config(format!(
            "train mode needs the drl selector, got {}; use --mode eval for baselines",
            cfg.selector
        )));
    }
    prepare_output(&cfg.output)?;
    let started = Instant::now();
    let mut writer = GamesWriter::create(&cfg.output)?;
    let (games, agents) = run_training(cfg, |g| {
        if (g.game + 1) % 50 == 0 {
            eprintln!(
                "game {:>5}  prr {:.3}  reward {:.3}  eps {:.3}",
                g.game + 1,
                g.mean_prr(),
                g.mean_reward(),
                g.mean_epsilon()
            );
        }
        writer.write(g)
    })?;
    save_agents(&agents, &cfg.output)?;
    write_plots(&cfg.output, &games)?;
    write_summary(cfg, "train", &games, started.elapsed().as_secs_f64())?;
    println!("trained {} games; results in {}", games.len(), cfg.output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(cfg: &RunConfig) -> Result<ExitCode> {
    prepare_output(&cfg.output)?;
    let started = Instant::now();
    let policy = selector_policy(cfg, cfg.selector, &cfg.output)?;
    let (games, agg) = run_evaluation(cfg, policy, cfg.eval_games)?;
    let mut writer = GamesWriter::create(&cfg.output)?;
    for g in &games {
        writer.write(g)?;
    }
    write_summary(cfg, "eval", &games, started.elapsed().as_secs_f64())?;
    println!(
        "{}: prr {:.4} ± {:.4}, dup {:.2}%, redundant {:.2}%",
        cfg.selector,
        agg.mean_prr,
        agg.std_prr,
        agg.dup_pct,
        agg.redundant_pct()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(cfg: &RunConfig) -> Result<ExitCode> {
    prepare_output(&cfg.output)?;
    // Fail before any simulation if the trained weights are missing.
    selector_policy(cfg, Selector::Drl, &cfg.output)?;
    let mut rows = Vec::new();
    for congestion in Congestion::ALL {
        let cell_cfg = cfg.with_congestion(congestion);
        for selector in Selector::ALL {
            let policy = selector_policy(&cell_cfg, selector, &cfg.output)?;
            let (_, agg) = run_evaluation(&cell_cfg, policy, cfg.eval_games)?;
            println!(
                "{congestion:>4} {selector:<16} prr {:.4} ± {:.4}  dup {:6.2}%  redundant {:6.2}%",
                agg.mean_prr,
                agg.std_prr,
                agg.dup_pct,
                agg.redundant_pct()
            );
            rows.push(CompareRow {
                selector: selector.to_string(),
                congestion: congestion.to_string(),
                aggregate: agg,
            });
        }
    }
    write_file(&cfg.output.join("compare.csv"), &compare_csv(&rows))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(cfg: &RunConfig) -> Result<ExitCode> {
    let started = Instant::now();
    let results = validate::run_all(cfg)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed, {:.1} s", results.len(), started.elapsed().as_secs_f64());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
