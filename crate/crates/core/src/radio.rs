//! Abstract per-RAT channel models.
//!
//! Both technologies share log-distance path loss. LTE-V2X adds i.i.d.
//! Rayleigh power fading per transmission. Medium access is reduced to a
//! load-to-collision curve, and decoding succeeds with a logistic probability
//! in SNIR. Co-channel interference comes from a two-state occupancy process
//! per RAT (clear / busy) whose busy share grows with channel load; it is
//! what makes channel quality persist across beacon periods.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Hard ceiling for one-way latency. Acknowledgments must make it back
/// before the sender's next 100 ms beacon.
pub const LATENCY_CLAMP_MS: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RatKind {
    ItsG5,
    LteV2xPc5,
}

impl RatKind {
    pub const ALL: [RatKind; 2] = [RatKind::ItsG5, RatKind::LteV2xPc5];

    pub fn index(self) -> usize {
        match self {
            RatKind::ItsG5 => 0,
            RatKind::LteV2xPc5 => 1,
        }
    }
}

impl fmt::Display for RatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatKind::ItsG5 => "ITS-G5",
            RatKind::LteV2xPc5 => "LTE-V2X",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingModel {
    None,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatParams {
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub energy_detection_dbm: f64,
    pub background_noise_dbm: f64,
    pub center_frequency_hz: f64,
    pub fading: FadingModel,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    /// Concurrent transmitters the channel carries before it saturates.
    pub capacity: usize,
    pub collision_kappa: f64,
    /// SNIR at which decoding succeeds half of the time.
    pub snir50_db: f64,
    pub snir_slope_db: f64,
    pub base_latency_ms: f64,
    pub latency_load_scale_ms: f64,
    /// Long-run busy share of the occupancy process per unit of load.
    pub busy_per_load: f64,
    /// Mean sojourn in the busy state.
    pub busy_dwell_ms: f64,
    /// Aggregate co-channel interference while busy.
    pub busy_interference_dbm: f64,
}

impl RatParams {
    pub fn its_g5() -> Self {
        Self {
            tx_power_dbm: 23.0,
            rx_sensitivity_dbm: -85.0,
            energy_detection_dbm: -85.0,
            background_noise_dbm: -90.0,
            center_frequency_hz: 5.880e9,
            fading: FadingModel::None,
            path_loss_exponent: 2.0,
            reference_distance_m: 1.0,
            capacity: 50,
            collision_kappa: 0.02,
            snir50_db: 5.0,
            snir_slope_db: 2.0,
            base_latency_ms: 2.0,
            latency_load_scale_ms: 40.0,
            busy_per_load: 0.5,
            busy_dwell_ms: 3000.0,
            busy_interference_dbm: -60.0,
        }
    }

    pub fn lte_v2x() -> Self {
        Self {
            background_noise_dbm: -110.0,
            center_frequency_hz: 5.900e9,
            fading: FadingModel::Rayleigh,
            capacity: 100,
            base_latency_ms: 10.0,
            // Twice the capacity, same busy share per transmitter.
            busy_per_load: 1.0,
            ..Self::its_g5()
        }
    }

    pub fn defaults_for(rat: RatKind) -> Self {
        match rat {
            RatKind::ItsG5 => Self::its_g5(),
            RatKind::LteV2xPc5 => Self::lte_v2x(),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("radio.{name}: {msg}")));
        if !self.tx_power_dbm.is_finite() {
            return bad("tx_power_dbm must be finite".into());
        }
        if !(self.rx_sensitivity_dbm < self.tx_power_dbm) {
            return bad(format!(
                "rx_sensitivity_dbm ({}) must be below tx_power_dbm ({})",
                self.rx_sensitivity_dbm, self.tx_power_dbm
            ));
        }
        if !(self.center_frequency_hz > 0.0) {
            return bad("center_frequency_hz must be > 0".into());
        }
        if !(self.reference_distance_m > 0.0 && self.path_loss_exponent > 0.0) {
            return bad("reference_distance_m and path_loss_exponent must be > 0".into());
        }
        if self.capacity == 0 {
            return bad("capacity must be > 0".into());
        }
        if !(self.collision_kappa >= 0.0) {
            return bad("collision_kappa must be >= 0".into());
        }
        if !(self.snir_slope_db > 0.0) {
            return bad("snir_slope_db must be > 0".into());
        }
        if !(self.base_latency_ms >= 0.0 && self.base_latency_ms < LATENCY_CLAMP_MS) {
            return bad(format!("base_latency_ms must be in [0, {LATENCY_CLAMP_MS})"));
        }
        if !(self.latency_load_scale_ms >= 0.0) {
            return bad("latency_load_scale_ms must be >= 0".into());
        }
        if !(self.busy_per_load >= 0.0 && self.busy_dwell_ms > 0.0) {
            return bad("busy_per_load must be >= 0 and busy_dwell_ms > 0".into());
        }
        Ok(())
    }
}

/// Per-RAT parameter sets. Each section defaults to its own RAT's values, so a
/// file only lists the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadioConfig {
    pub its_g5: RatParams,
    pub lte: RatParams,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            its_g5: RatParams::its_g5(),
            lte: RatParams::lte_v2x(),
        }
    }
}

impl<'de> Deserialize<'de> for RadioConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde_json::Value;

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            its_g5: Option<Value>,
            #[serde(default)]
            lte: Option<Value>,
        }

        fn merge<E: serde::de::Error>(base: RatParams, patch: Option<Value>, name: &str) -> std::result::Result<RatParams, E> {
            let Some(patch) = patch else { return Ok(base) };
            let mut merged = serde_json::to_value(base).map_err(E::custom)?;
            match (&mut merged, patch) {
                (Value::Object(dst), Value::Object(src)) => dst.extend(src),
                _ => return Err(E::custom(format!("radio.{name} must be a table"))),
            }
            serde_json::from_value(merged).map_err(|e| E::custom(format!("radio.{name}: {e}")))
        }

        let raw = Raw::deserialize(d)?;
        Ok(Self {
            its_g5: merge::<D::Error>(RatParams::its_g5(), raw.its_g5, "its_g5")?,
            lte: merge::<D::Error>(RatParams::lte_v2x(), raw.lte, "lte")?,
        })
    }
}

impl RadioConfig {
    pub fn get(&self, rat: RatKind) -> &RatParams {
        match rat {
            RatKind::ItsG5 => &self.its_g5,
            RatKind::LteV2xPc5 => &self.lte,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.its_g5.validate("its_g5")?;
        self.lte.validate("lte")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub snir_db: f64,
    pub delivered: bool,
    pub latency_ms: f64,
    pub collided: bool,
}

/// Log-distance path loss with a free-space reference of 1 m.
pub fn path_loss_db(distance: f64, frequency_hz: f64, exponent: f64) -> f64 {
    path_loss_db_from(distance, frequency_hz, exponent, 1.0)
}

/// Log-distance path loss; distances below `d0` are clamped to `d0`.
pub fn path_loss_db_from(distance: f64, frequency_hz: f64, exponent: f64, d0: f64) -> f64 {
    let d = distance.max(d0);
    20.0 * (4.0 * std::f64::consts::PI * d0 * frequency_hz / SPEED_OF_LIGHT).log10()
        + 10.0 * exponent * (d / d0).log10()
}

/// Power fading gain in dB. Rayleigh fading draws a unit-mean exponential
/// power sample.
pub fn fading_gain_db(model: FadingModel, rng: &mut SimRng) -> f64 {
    match model {
        FadingModel::None => 0.0,
        FadingModel::Rayleigh => {
            let x: f64 = Exp1.sample(rng);
            10.0 * x.max(f64::MIN_POSITIVE).log10()
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Signal to noise-plus-interference ratio with interferers summed in the
/// linear power domain.
pub fn snir_db(rx_power_dbm: f64, noise_dbm: f64, interference_dbm: &[f64]) -> f64 {
    let total = dbm_to_mw(noise_dbm) + interference_dbm.iter().map(|&i| dbm_to_mw(i)).sum::<f64>();
    rx_power_dbm - mw_to_dbm(total)
}

pub fn channel_load(active_transmitters: usize, capacity: usize) -> f64 {
    debug_assert!(capacity > 0);
    (active_transmitters as f64 / capacity as f64).min(1.0)
}

pub fn collision_probability(kappa: f64, load: f64) -> f64 {
    1.0 - (-kappa * load).exp()
}

/// Conditional decode probability given no collision.
pub fn decode_probability(params: &RatParams, snir_db: f64) -> f64 {
    1.0 / (1.0 + (-(snir_db - params.snir50_db) / params.snir_slope_db).exp())
}

/// One-way latency: fixed access delay plus load-dependent exponential
/// queueing, clamped below the beacon period.
pub fn latency_sample(params: &RatParams, load: f64, rng: &mut SimRng) -> f64 {
    let mean = params.latency_load_scale_ms * load;
    let jitter = if mean > 0.0 {
        Exp::new(1.0 / mean).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        // Keep stream consumption independent of load.
        let _: f64 = rng.random();
        0.0
    };
    (params.base_latency_ms + jitter).min(LATENCY_CLAMP_MS)
}

/// Resolves a single frame at one receiver. Each call consumes the same
/// number of draws regardless of the outcome.
pub fn delivery_outcome(
    params: &RatParams,
    rx_power_dbm: f64,
    snir_db: f64,
    load: f64,
    payload_fraction: f64,
    rng: &mut SimRng,
) -> LinkSample {
    debug_assert!(payload_fraction > 0.0 && payload_fraction <= 1.0);
    let collision_draw: f64 = rng.random();
    let decode_draw: f64 = rng.random();
    let latency_ms = latency_sample(params, load, rng);

    let collided = collision_draw < collision_probability(params.collision_kappa, load) * payload_fraction;
    let delivered = !collided
        && rx_power_dbm >= params.rx_sensitivity_dbm
        && decode_draw < decode_probability(params, snir_db);
    LinkSample {
        snir_db,
        delivered,
        latency_ms,
        collided,
    }
}

/// Full link evaluation: path loss, fading, SNIR and delivery.
pub fn sample_link(
    params: &RatParams,
    distance: f64,
    load: f64,
    payload_fraction: f64,
    interference_dbm: &[f64],
    rng: &mut SimRng,
) -> LinkSample {
    let loss = path_loss_db_from(
        distance,
        params.center_frequency_hz,
        params.path_loss_exponent,
        params.reference_distance_m,
    );
    let rx = params.tx_power_dbm - loss + fading_gain_db(params.fading, rng);
    let snir = snir_db(rx, params.background_noise_dbm, interference_dbm);
    delivery_outcome(params, rx, snir, load, payload_fraction, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Occupancy {
    #[default]
    Clear,
    Busy,
}

/// Two-state channel occupancy. The busy state lasts `busy_dwell_ms` on
/// average; the clear-to-busy rate is set so the long-run busy share equals
/// [`OccupancyProcess::busy_share`] at the current load.
#[derive(Debug, Clone, Default)]
pub struct OccupancyProcess {
    state: Occupancy,
}

impl OccupancyProcess {
    pub const MAX_BUSY_SHARE: f64 = 0.95;

    pub fn state(&self) -> Occupancy {
        self.state
    }

    pub fn set_state(&mut self, state: Occupancy) {
        self.state = state;
    }

    pub fn busy_share(params: &RatParams, load: f64) -> f64 {
        (params.busy_per_load * load).clamp(0.0, Self::MAX_BUSY_SHARE)
    }

    pub fn step(&mut self, params: &RatParams, load: f64, dt_ms: f64, rng: &mut SimRng) {
        let share = Self::busy_share(params, load);
        let leave = (dt_ms / params.busy_dwell_ms).min(1.0);
        let enter = (leave * share / (1.0 - share)).min(1.0);
        let draw: f64 = rng.random();
        self.state = match self.state {
            Occupancy::Clear if draw < enter => Occupancy::Busy,
            Occupancy::Busy if draw < leave => Occupancy::Clear,
            s => s,
        };
    }

    /// Interference contributed by the current state.
    pub fn interference(&self, params: &RatParams) -> Option<f64> {
        match self.state {
            Occupancy::Clear => None,
            Occupancy::Busy => Some(params.busy_interference_dbm),
        }
    }
}
