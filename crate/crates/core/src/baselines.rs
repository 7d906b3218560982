//! Comparison selectors: fixed-mode policies and a TOPSIS ranking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{normalize_snir, Observations, NEUTRAL_FEATURE};
use crate::error::{Error, Result};
use crate::hybrid::CommMode;
use crate::radio::{RadioConfig, RatKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticPolicy {
    AlwaysItsG5,
    AlwaysLte,
    AlwaysRedundant,
}

pub fn static_select(policy: StaticPolicy) -> CommMode {
    match policy {
        StaticPolicy::AlwaysItsG5 => CommMode::SingleItsG5,
        StaticPolicy::AlwaysLte => CommMode::SingleLte,
        StaticPolicy::AlwaysRedundant => CommMode::HybridRedundant,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionSense {
    Benefit,
    Cost,
}

/// Decision matrix in row-major order: one row per alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct TopsisInput {
    pub matrix: Vec<f64>,
    pub alternatives: usize,
    pub weights: Vec<f64>,
    pub senses: Vec<CriterionSense>,
}

impl TopsisInput {
    pub fn criteria(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.criteria();
        if self.alternatives == 0 || k == 0 {
            return Err(Error::Input("need at least one alternative and one criterion".into()));
        }
        if self.senses.len() != k || self.matrix.len() != self.alternatives * k {
            return Err(Error::Shape(format!(
                "{} alternatives x {k} criteria with {} matrix entries and {} senses",
                self.alternatives,
                self.matrix.len(),
                self.senses.len()
            )));
        }
        if !self.matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("decision matrix contains a non-finite value".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Input("weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Closeness of each alternative to the ideal solution, in [0, 1].
pub fn topsis_rank(input: &TopsisInput) -> Result<Vec<f64>> {
    input.validate()?;
    let n = input.alternatives;
    let k = input.criteria();
    let mut v = input.matrix.clone();
    for j in 0..k {
        let norm = (0..n).map(|i| v[i * k + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            let x = &mut v[i * k + j];
            *x = if norm > 0.0 { *x / norm * input.weights[j] } else { 0.0 };
        }
    }
    let mut ideal = vec![0.0; k];
    let mut anti = vec![0.0; k];
    for j in 0..k {
        let col = (0..n).map(|i| v[i * k + j]);
        let hi = col.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = col.fold(f64::INFINITY, f64::min);
        (ideal[j], anti[j]) = match input.senses[j] {
            CriterionSense::Benefit => (hi, lo),
            CriterionSense::Cost => (lo, hi),
        };
    }
    Ok((0..n)
        .map(|i| {
            let row = &v[i * k..(i + 1) * k];
            let dist = |p: &[f64]| row.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let (sp, sm) = (dist(&ideal), dist(&anti));
            if sp + sm == 0.0 {
                0.5
            } else {
                sm / (sp + sm)
            }
        })
        .collect())
}

/// Weights of the four mode-selection criteria: SNIR, PRR, resource cost
/// and latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopsisWeights {
    pub snir: f64,
    pub prr: f64,
    pub cost: f64,
    pub latency: f64,
}

impl Default for TopsisWeights {
    fn default() -> Self {
        Self {
            snir: 0.25,
            prr: 0.25,
            cost: 0.25,
            latency: 0.25,
        }
    }
}

impl TopsisWeights {
    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.snir, self.prr, self.cost, self.latency]
    }
}

pub const MODE_CRITERIA: [CriterionSense; 4] = [
    CriterionSense::Benefit,
    CriterionSense::Benefit,
    CriterionSense::Cost,
    CriterionSense::Cost,
];

/// Builds the 4x4 mode decision matrix from current observations. Missing
/// observations fall back to the same neutral values the agent state uses.
pub fn mode_decision_matrix(obs: &Observations, radio: &RadioConfig) -> Vec<f64> {
    let snir = |rat| obs.snir_db(rat).map_or(NEUTRAL_FEATURE, normalize_snir);
    let prr = |rat| obs.prr(rat).unwrap_or(NEUTRAL_FEATURE);
    let lat = |rat| radio.get(rat).base_latency_ms;
    let (g5, lte) = (RatKind::ItsG5, RatKind::LteV2xPc5);
    let mut m = Vec::with_capacity(16);
    for mode in CommMode::ALL {
        let row = match mode {
            CommMode::SingleItsG5 => [snir(g5), prr(g5), 1.0, lat(g5)],
            CommMode::SingleLte => [snir(lte), prr(lte), 1.0, lat(lte)],
            CommMode::HybridRedundant => [
                snir(g5).max(snir(lte)),
                prr(g5).max(prr(lte)),
                2.0,
                lat(g5).min(lat(lte)),
            ],
            CommMode::HybridDivision => [
                snir(g5).min(snir(lte)),
                prr(g5).min(prr(lte)),
                1.0,
                lat(g5).max(lat(lte)),
            ],
        };
        m.extend(row);
    }
    m
}

/// Highest-closeness mode; ties go to the lowest action code.
pub fn topsis_select(obs: &Observations, radio: &RadioConfig, weights: &TopsisWeights) -> Result<CommMode> {
    let closeness = topsis_rank(&TopsisInput {
        matrix: mode_decision_matrix(obs, radio),
        alternatives: CommMode::COUNT,
        weights: weights.as_vec(),
        senses: MODE_CRITERIA.to_vec(),
    })?;
    let mut best = 0;
    for (i, c) in closeness.iter().enumerate() {
        if *c > closeness[best] {
            best = i;
        }
    }
    Ok(CommMode::ALL[best])
}

/// Mode-selection strategy named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    #[default]
    Drl,
    StaticG5,
    StaticLte,
    StaticRedundant,
    Topsis,
}

impl Selector {
    pub const ALL: [Selector; 5] = [
        Selector::Drl,
        Selector::StaticG5,
        Selector::StaticLte,
        Selector::StaticRedundant,
        Selector::Topsis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Drl => "drl",
            Selector::StaticG5 => "static-g5",
            Selector::StaticLte => "static-lte",
            Selector::StaticRedundant => "static-redundant",
            Selector::Topsis => "topsis",
        }
    }

    pub fn static_policy(self) -> Option<StaticPolicy> {
        match self {
            Selector::StaticG5 => Some(StaticPolicy::AlwaysItsG5),
            Selector::StaticLte => Some(StaticPolicy::AlwaysLte),
            Selector::StaticRedundant => Some(StaticPolicy::AlwaysRedundant),
            _ => None,
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|sel| sel.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown selector {s:?}")))
    }
}
