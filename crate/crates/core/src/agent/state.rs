use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::RatKind;

pub const STATE_DIM: usize = 6;
pub const SNIR_MIN_DB: f64 = -10.0;
pub const SNIR_MAX_DB: f64 = 40.0;

/// Feature value used for a RAT that has not been observed yet.
pub const NEUTRAL_FEATURE: f64 = 0.5;

/// Normalized observation:
/// `[snir_g5, snir_lte, prr_g5, prr_lte, latency_req, reliability_req]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVec(pub [f64; STATE_DIM]);

impl StateVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn snir(&self, rat: RatKind) -> f64 {
        self.0[rat.index()]
    }

    pub fn prr(&self, rat: RatKind) -> f64 {
        self.0[2 + rat.index()]
    }

    pub fn latency_req(&self) -> f64 {
        self.0[4]
    }

    pub fn reliability_req(&self) -> f64 {
        self.0[5]
    }
}

pub fn normalize_snir(db: f64) -> f64 {
    (db.clamp(SNIR_MIN_DB, SNIR_MAX_DB) - SNIR_MIN_DB) / (SNIR_MAX_DB - SNIR_MIN_DB)
}

/// Application requirements carried in the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppRequirements {
    pub latency_ms: f64,
    pub reliability: f64,
}

impl Default for AppRequirements {
    fn default() -> Self {
        Self {
            latency_ms: 100.0,
            reliability: 0.95,
        }
    }
}

impl AppRequirements {
    pub fn validate(&self) -> Result<()> {
        if !(self.latency_ms > 0.0 && self.latency_ms <= 100.0) {
            return Err(Error::Config(format!(
                "latency requirement must be in (0, 100] ms, got {}",
                self.latency_ms
            )));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            return Err(Error::Config(format!(
                "reliability requirement must be in [0, 1], got {}",
                self.reliability
            )));
        }
        Ok(())
    }
}

pub fn build_state(
    snir_db: [Option<f64>; 2],
    prr: [Option<f64>; 2],
    req: &AppRequirements,
) -> Result<StateVec> {
    if prr.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Input(format!("prr observations out of range: {prr:?}")));
    }
    req.validate()?;
    let snir = |x: Option<f64>| x.map_or(NEUTRAL_FEATURE, normalize_snir);
    Ok(StateVec([
        snir(snir_db[0]),
        snir(snir_db[1]),
        prr[0].unwrap_or(NEUTRAL_FEATURE),
        prr[1].unwrap_or(NEUTRAL_FEATURE),
        req.latency_ms / 100.0,
        req.reliability,
    ]))
}

/// Running per-RAT link measurements kept by a vehicle's radio resource
/// management. SNIR is smoothed in dB over decoded frames, PRR over the
/// per-neighbor outcomes of the vehicle's own transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observations {
    snir_db: [Option<f64>; 2],
    prr: [Option<f64>; 2],
}

impl Observations {
    pub fn snir_db(&self, rat: RatKind) -> Option<f64> {
        self.snir_db[rat.index()]
    }

    pub fn prr(&self, rat: RatKind) -> Option<f64> {
        self.prr[rat.index()]
    }

    pub fn snir_pair(&self) -> [Option<f64>; 2] {
        self.snir_db
    }

    pub fn record_snir(&mut self, rat: RatKind, db: f64, smoothing: f64) {
        let slot = &mut self.snir_db[rat.index()];
        *slot = Some(match *slot {
            Some(prev) => prev + smoothing * (db - prev),
            None => db,
        });
    }

    pub fn record_delivery(&mut self, rat: RatKind, delivered: bool, smoothing: f64) {
        let x = if delivered { 1.0 } else { 0.0 };
        let slot = &mut self.prr[rat.index()];
        *slot = Some(match *slot {
            Some(prev) => prev + smoothing * (x - prev),
            None => x,
        });
    }

    pub fn state(&self, req: &AppRequirements) -> Result<StateVec> {
        build_state(self.snir_db, self.prr, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snir_normalization() {
        assert_eq!(normalize_snir(40.0), 1.0);
        assert_eq!(normalize_snir(80.0), 1.0);
        assert_eq!(normalize_snir(15.0), 0.5);
        assert_eq!(normalize_snir(-30.0), 0.0);
    }

    #[test]
    fn requirement_features() {
        let req = AppRequirements {
            latency_ms: 100.0,
            reliability: 0.95,
        };
        let s = build_state([Some(40.0), Some(15.0)], [Some(0.9), Some(0.8)], &req).unwrap();
        assert_eq!(s.0, [1.0, 0.5, 0.9, 0.8, 1.0, 0.95]);
    }

    #[test]
    fn missing_observations_are_neutral() {
        let s = Observations::default().state(&AppRequirements::default()).unwrap();
        assert_eq!(&s.0[..4], &[0.5; 4]);
    }

    #[test]
    fn invalid_inputs() {
        let req = AppRequirements::default();
        assert!(build_state([None, None], [Some(1.5), None], &req).is_err());
        let bad = AppRequirements {
            latency_ms: 0.0,
            reliability: 0.9,
        };
        assert!(build_state([None, None], [None, None], &bad).is_err());
    }

    #[test]
    fn smoothing_tracks_measurements() {
        let mut o = Observations::default();
        o.record_snir(RatKind::ItsG5, 20.0, 0.5);
        assert_eq!(o.snir_db(RatKind::ItsG5), Some(20.0));
        o.record_snir(RatKind::ItsG5, 10.0, 0.5);
        assert_eq!(o.snir_db(RatKind::ItsG5), Some(15.0));
        o.record_delivery(RatKind::LteV2xPc5, false, 0.25);
        o.record_delivery(RatKind::LteV2xPc5, true, 0.25);
        assert_eq!(o.prr(RatKind::LteV2xPc5), Some(0.25));
        assert_eq!(o.snir_db(RatKind::LteV2xPc5), None);
    }
}
