use std::path::{Path, PathBuf};

use super::{Aggregate, Engine, GameStats, Policy};
use crate::agent::DqnAgent;
use crate::baselines::Selector;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub fn weights_path(dir: &Path, agent: usize) -> PathBuf {
    dir.join(format!("weights-agent{agent}.bin"))
}

fn agent_count(run: &RunConfig) -> usize {
    if run.agent.share_parameters {
        1
    } else {
        run.scenario.platoon_size
    }
}

pub fn new_agents(run: &RunConfig) -> Result<Vec<DqnAgent>> {
    (0..agent_count(run))
        .map(|k| DqnAgent::new(run.agent.clone(), stream_rng(run.seed, stream::AGENT_BASE + k as u64)))
        .collect()
}

pub fn save_agents(agents: &[DqnAgent], dir: &Path) -> Result<Vec<PathBuf>> {
    agents
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let path = weights_path(dir, k);
            a.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Loads frozen agents for evaluation; epsilon is zero.
pub fn load_agents(run: &RunConfig, dir: &Path) -> Result<Vec<DqnAgent>> {
    (0..agent_count(run))
        .map(|k| {
            let path = weights_path(dir, k);
            if !path.exists() {
                return Err(Error::Weights(format!(
                    "{} not found; train first with `--mode train --out {}`",
                    path.display(),
                    dir.display()
                )));
            }
            let mut agent = DqnAgent::load(
                run.agent.clone(),
                &path,
                stream_rng(run.seed, stream::AGENT_BASE + k as u64),
            )?;
            agent.set_epsilon(0.0);
            Ok(agent)
        })
        .collect()
}

pub fn trained_policy(mut agents: Vec<DqnAgent>) -> Policy {
    for a in &mut agents {
        a.set_epsilon(0.0);
    }
    Policy::Drl { agents, learning: false }
}

/// Policy for a selector; DRL weights are read from `weights_dir`.
pub fn selector_policy(run: &RunConfig, selector: Selector, weights_dir: &Path) -> Result<Policy> {
    Ok(match selector {
        Selector::Drl => trained_policy(load_agents(run, weights_dir)?),
        Selector::Topsis => Policy::Topsis(run.topsis),
        s => Policy::Static(s.static_policy().expect("static selector")),
    })
}

/// Trains fresh agents for `run.games` games. `on_game` sees each game as
/// soon as it closes, so callers can persist results incrementally.
pub fn run_training(
    run: &RunConfig,
    mut on_game: impl FnMut(&GameStats) -> Result<()>,
) -> Result<(Vec<GameStats>, Vec<DqnAgent>)> {
    let mut engine = Engine::new(
        run,
        Policy::Drl {
            agents: new_agents(run)?,
            learning: true,
        },
    )?;
    let mut games = Vec::with_capacity(run.games);
    for _ in 0..run.games {
        let g = engine.run_game()?;
        on_game(&g)?;
        games.push(g);
    }
    match engine.into_policy() {
        Policy::Drl { agents, .. } => Ok((games, agents)),
        _ => unreachable!("training engine always holds agents"),
    }
}

/// Plays `games` games without exploration or learning.
pub fn run_evaluation(run: &RunConfig, policy: Policy, games: usize) -> Result<(Vec<GameStats>, Aggregate)> {
    let policy = match policy {
        Policy::Drl { agents, .. } => trained_policy(agents),
        p => p,
    };
    let mut engine = Engine::new(run, policy)?;
    let stats = (0..games).map(|_| engine.run_game()).collect::<Result<Vec<_>>>()?;
    let agg = Aggregate::from_games(&stats);
    Ok((stats, agg))
}
