use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{prr_game, CommMode, DuplicateCounter};

/// Per-agent counters of one game.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentGameStats {
    pub n_sent: u64,
    pub sr: u32,
    pub prr: f64,
    pub reward_sum: f64,
    pub epsilon: f64,
    pub mode_counts: [u64; CommMode::COUNT],
    pub duplicates: DuplicateCounter,
}

impl AgentGameStats {
    pub fn mean_reward(&self) -> f64 {
        if self.n_sent == 0 {
            0.0
        } else {
            self.reward_sum / self.n_sent as f64
        }
    }

    pub fn dup_pct(&self) -> f64 {
        self.duplicates.percentage()
    }

    /// Checks the accounting identities against the raw counters.
    pub fn check(&self, sr_target: u32) -> Result<()> {
        let modes: u64 = self.mode_counts.iter().sum();
        if modes != self.n_sent {
            return Err(Error::Accounting(format!("mode counts sum to {modes}, sent {}", self.n_sent)));
        }
        if self.sr as u64 > self.n_sent {
            return Err(Error::Accounting(format!("sr {} exceeds sent {}", self.sr, self.n_sent)));
        }
        if self.sr != sr_target {
            return Err(Error::Accounting(format!("sr {} at game end, target {sr_target}", self.sr)));
        }
        let expected = prr_game(sr_target, self.n_sent)?;
        if self.prr != expected {
            return Err(Error::Accounting(format!("prr {} != {expected}", self.prr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameStats {
    pub game: usize,
    pub agents: Vec<AgentGameStats>,
    pub wall_time_s: f64,
}

impl GameStats {
    fn mean_of(&self, f: impl Fn(&AgentGameStats) -> f64) -> f64 {
        if self.agents.is_empty() {
            return 0.0;
        }
        self.agents.iter().map(f).sum::<f64>() / self.agents.len() as f64
    }

    pub fn mean_prr(&self) -> f64 {
        self.mean_of(|a| a.prr)
    }

    pub fn mean_reward(&self) -> f64 {
        self.mean_of(|a| a.mean_reward())
    }

    pub fn mean_epsilon(&self) -> f64 {
        self.mean_of(|a| a.epsilon)
    }

    pub fn mean_n_sent(&self) -> f64 {
        self.mean_of(|a| a.n_sent as f64)
    }

    pub fn mean_sr(&self) -> f64 {
        self.mean_of(|a| a.sr as f64)
    }

    pub fn duplicates(&self) -> DuplicateCounter {
        let mut c = DuplicateCounter::default();
        for a in &self.agents {
            c.merge(a.duplicates);
        }
        c
    }

    pub fn dup_pct(&self) -> f64 {
        self.duplicates().percentage()
    }

    pub fn mode_counts(&self) -> [u64; CommMode::COUNT] {
        let mut m = [0; CommMode::COUNT];
        for a in &self.agents {
            for (t, c) in m.iter_mut().zip(a.mode_counts) {
                *t += c;
            }
        }
        m
    }

    pub fn n_sent(&self) -> u64 {
        self.agents.iter().map(|a| a.n_sent).sum()
    }

    /// Share of all sends that used a given mode, in percent.
    pub fn mode_pct(&self, mode: CommMode) -> f64 {
        let n = self.n_sent();
        if n == 0 {
            0.0
        } else {
            100.0 * self.mode_counts()[mode.index()] as f64 / n as f64
        }
    }
}

/// Aggregate over a set of games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub games: usize,
    pub mean_prr: f64,
    pub std_prr: f64,
    pub mean_reward: f64,
    pub dup_pct: f64,
    /// Percent of sends per mode.
    pub mode_pct: [f64; CommMode::COUNT],
}

impl Aggregate {
    pub fn redundant_pct(&self) -> f64 {
        self.mode_pct[CommMode::HybridRedundant.index()]
    }

    pub fn from_games(games: &[GameStats]) -> Self {
        let prr: Vec<f64> = games.iter().map(GameStats::mean_prr).collect();
        let (mean_prr, std_prr) = mean_std(&prr);
        let mean_reward = mean_std(&games.iter().map(GameStats::mean_reward).collect::<Vec<_>>()).0;
        let mut dup = DuplicateCounter::default();
        let mut modes = [0u64; CommMode::COUNT];
        for g in games {
            dup.merge(g.duplicates());
            for (t, c) in modes.iter_mut().zip(g.mode_counts()) {
                *t += c;
            }
        }
        let sent: u64 = modes.iter().sum();
        let mode_pct = modes.map(|c| if sent == 0 { 0.0 } else { 100.0 * c as f64 / sent as f64 });
        Self {
            games: games.len(),
            mean_prr,
            std_prr,
            mean_reward,
            dup_pct: dup.percentage(),
            mode_pct,
        }
    }
}

/// Mean and population standard deviation; zeros for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trailing mean; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Input("moving-average window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Trailing population standard deviation with partial head windows.
pub fn moving_std(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Input("moving-std window must be >= 1".into()));
    }
    Ok((0..series.len())
        .map(|i| mean_std(&series[(i + 1).saturating_sub(window)..=i]).1)
        .collect())
}
