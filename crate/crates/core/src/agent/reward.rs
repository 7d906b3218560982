use serde::{Deserialize, Serialize};

use super::state::AppRequirements;
use crate::hybrid::{AckRecord, Report};
use crate::scenario::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the performance-satisfaction term.
    pub alpha: f64,
    /// Weight of the link-quality term.
    pub beta: f64,
    /// Score of a doubly received message in the reception term.
    pub theta: f64,
    /// Average the reception term over neighbors instead of summing it.
    pub normalize_by_neighbors: bool,
    pub lq_deadband_db: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            theta: 0.5,
            normalize_by_neighbors: true,
            lq_deadband_db: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerformanceSatisfaction {
    Satisfied,
    Violated,
}

impl PerformanceSatisfaction {
    pub fn value(self) -> f64 {
        match self {
            Self::Satisfied => 1.0,
            Self::Violated => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkQuality {
    Degraded,
    Stable,
    Improved,
}

impl LinkQuality {
    pub fn value(self) -> f64 {
        match self {
            Self::Degraded => -1.0,
            Self::Stable => 0.0,
            Self::Improved => 1.0,
        }
    }
}

fn report_score(report: Report, theta: f64) -> f64 {
    match report {
        Report::Missed => 0.0,
        Report::Received => 1.0,
        Report::Duplicate => theta,
    }
}

/// `1/2 * reception + alpha/2 * PS + beta/2 * LQ`.
pub fn compute_reward(
    reports: &[Report],
    ps: PerformanceSatisfaction,
    lq: LinkQuality,
    cfg: &RewardConfig,
) -> f64 {
    let sum: f64 = reports.iter().map(|&r| report_score(r, cfg.theta)).sum();
    let reception = match (reports.len(), cfg.normalize_by_neighbors) {
        (0, _) => 0.0,
        (n, true) => sum / n as f64,
        (_, false) => sum,
    };
    0.5 * reception + 0.5 * cfg.alpha * ps.value() + 0.5 * cfg.beta * lq.value()
}

/// Satisfied iff the share of expected neighbors holding at least one copy
/// reaches the reliability requirement and no first copy arrived later than
/// the latency requirement.
pub fn performance_satisfaction<'a>(
    acks: impl IntoIterator<Item = &'a AckRecord>,
    expected: &[VehicleId],
    req: &AppRequirements,
) -> PerformanceSatisfaction {
    let mut received = 0usize;
    let mut late = false;
    for a in acks {
        if a.copies >= 1 && expected.contains(&a.receiver) {
            received += 1;
            late |= a.first_copy_latency_ms > req.latency_ms;
        }
    }
    let share = if expected.is_empty() {
        1.0
    } else {
        received as f64 / expected.len() as f64
    };
    if share >= req.reliability && !late {
        PerformanceSatisfaction::Satisfied
    } else {
        PerformanceSatisfaction::Violated
    }
}

/// Sign of the mean per-RAT SNIR change, with a dead band. RATs lacking
/// either measurement are left out; with none left the link is stable.
pub fn link_quality_delta(now: [Option<f64>; 2], before: [Option<f64>; 2], deadband_db: f64) -> LinkQuality {
    let deltas: Vec<f64> = now
        .iter()
        .zip(&before)
        .filter_map(|(n, b)| Some((*n)? - (*b)?))
        .collect();
    if deltas.is_empty() {
        return LinkQuality::Stable;
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    if mean > deadband_db {
        LinkQuality::Improved
    } else if mean < -deadband_db {
        LinkQuality::Degraded
    } else {
        LinkQuality::Stable
    }
}
