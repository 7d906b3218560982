//! Run configuration: one TOML file with a section per component.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AppRequirements};
use crate::baselines::{Selector, TopsisWeights};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::scenario::{ScenarioConfig, HIGH_CONGESTION_BACKGROUND, LOW_CONGESTION_BACKGROUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Training games.
    pub games: usize,
    /// Games per evaluation cell.
    pub eval_games: usize,
    pub selector: Selector,
    pub output: PathBuf,
    pub requirements: AppRequirements,
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub agent: AgentConfig,
    pub engine: EngineConfig,
    pub topsis: TopsisWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            games: 1000,
            eval_games: 20,
            selector: Selector::Drl,
            output: PathBuf::from("out"),
            requirements: AppRequirements::default(),
            scenario: ScenarioConfig::default(),
            radio: RadioConfig::default(),
            agent: AgentConfig::default(),
            engine: EngineConfig::default(),
            topsis: TopsisWeights::default(),
        }
    }
}

/// Background-traffic presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Congestion {
    Low,
    High,
}

impl Congestion {
    pub const ALL: [Congestion; 2] = [Congestion::Low, Congestion::High];

    pub fn background_count(self) -> usize {
        match self {
            Congestion::Low => LOW_CONGESTION_BACKGROUND,
            Congestion::High => HIGH_CONGESTION_BACKGROUND,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Congestion::Low => "low",
            Congestion::High => "high",
        }
    }
}

impl fmt::Display for Congestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Congestion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Congestion::Low),
            "high" => Ok(Congestion::High),
            _ => Err(Error::Config(format!("unknown congestion level {s:?} (expected low or high)"))),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub games: Option<usize>,
    pub selector: Option<Selector>,
    pub congestion: Option<Congestion>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(games) = o.games {
            self.games = games;
        }
        if let Some(selector) = o.selector {
            self.selector = selector;
        }
        if let Some(c) = o.congestion {
            self.scenario.background_count = c.background_count();
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
    }

    /// Copy with the congestion preset applied.
    pub fn with_congestion(&self, c: Congestion) -> Self {
        let mut cfg = self.clone();
        cfg.scenario.background_count = c.background_count();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.games == 0 || self.eval_games == 0 {
            return Err(Error::Config("games and eval_games must be >= 1".into()));
        }
        self.requirements.validate()?;
        self.scenario.validate()?;
        self.radio.validate()?;
        self.agent.validate()?;
        self.engine.validate()?;
        let w = self.topsis.as_vec();
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("topsis weights must be non-negative and sum to 1".into()));
        }
        Ok(())
    }
}

/// Reads the file (if any), applies overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml_str(&text).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                other => other,
            })?
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
