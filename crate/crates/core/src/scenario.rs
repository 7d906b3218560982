//! Highway topology and vehicle mobility.
//!
//! A straight two-way highway carries one rigid platoon in lane 0 (forward
//! direction) plus background traffic. Platoon members keep an exact gap; the
//! cooperative cruise controller is reduced to constant-spacing following.
//! Vehicles that leave the road re-enter at the opposite end so the traffic
//! density stays constant for the whole run.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub highway_length: f64,
    pub lanes_per_direction: u8,
    pub platoon_size: usize,
    pub platoon_spacing: f64,
    pub platoon_speed: f64,
    pub background_speed: f64,
    /// Congestion knob: number of non-platoon vehicles on the road.
    pub background_count: usize,
    pub base_station_positions: Vec<f64>,
    pub comm_range: f64,
    /// Initial position of the platoon leader.
    pub platoon_start: f64,
    /// Filled from the run seed; not a file key.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            highway_length: 2000.0,
            lanes_per_direction: 2,
            platoon_size: 5,
            platoon_spacing: 10.0,
            platoon_speed: 10.0,
            background_speed: 20.0,
            background_count: LOW_CONGESTION_BACKGROUND,
            base_station_positions: vec![500.0, 1500.0],
            comm_range: 500.0,
            platoon_start: 100.0,
            seed: 0,
        }
    }
}

/// Background vehicle counts of the two congestion presets. These are
/// calibration values for this simulator.
pub const LOW_CONGESTION_BACKGROUND: usize = 20;
pub const HIGH_CONGESTION_BACKGROUND: usize = 80;

impl ScenarioConfig {
    /// Length of the platoon column from leader to tail.
    pub fn platoon_extent(&self) -> f64 {
        self.platoon_spacing * (self.platoon_size.saturating_sub(1)) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scenario: {msg}")));
        if !(self.highway_length.is_finite() && self.highway_length > 0.0) {
            return bad(format!("highway_length must be > 0, got {}", self.highway_length));
        }
        if self.lanes_per_direction == 0 {
            return bad("lanes_per_direction must be >= 1".into());
        }
        if self.platoon_size < 2 {
            return bad(format!("platoon_size must be >= 2, got {}", self.platoon_size));
        }
        if !(self.platoon_spacing.is_finite() && self.platoon_spacing > 0.0) {
            return bad(format!("platoon_spacing must be > 0, got {}", self.platoon_spacing));
        }
        if !(self.platoon_speed >= 0.0 && self.background_speed >= 0.0) {
            return bad("speeds must be >= 0".into());
        }
        if !(self.comm_range.is_finite() && self.comm_range > 0.0) {
            return bad(format!("comm_range must be > 0, got {}", self.comm_range));
        }
        if self.platoon_extent() >= self.highway_length {
            return bad(format!(
                "platoon of {} m does not fit on a {} m highway",
                self.platoon_extent(),
                self.highway_length
            ));
        }
        let start = self.platoon_start;
        if start < self.platoon_extent() || start > self.highway_length {
            return bad(format!(
                "platoon_start {start} must lie in [{}, {}]",
                self.platoon_extent(),
                self.highway_length
            ));
        }
        if let Some(p) = self
            .base_station_positions
            .iter()
            .find(|p| !(0.0..=self.highway_length).contains(*p))
        {
            return bad(format!("base station at {p} outside the highway"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position: f64,
    pub lane: u8,
    pub direction: Direction,
    pub speed: f64,
    pub is_platoon_member: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioState {
    config: ScenarioConfig,
    /// Platoon members first (leader at index 0), then background vehicles.
    vehicles: Vec<VehicleState>,
    time_s: f64,
}

pub fn init_scenario(config: ScenarioConfig, rng: &mut SimRng) -> Result<ScenarioState> {
    config.validate()?;
    let mut vehicles = Vec::with_capacity(config.platoon_size + config.background_count);
    for k in 0..config.platoon_size {
        vehicles.push(VehicleState {
            id: VehicleId(k as u32),
            position: config.platoon_start - config.platoon_spacing * k as f64,
            lane: 0,
            direction: Direction::Forward,
            speed: config.platoon_speed,
            is_platoon_member: true,
        });
    }
    for k in 0..config.background_count {
        let direction = if rng.random_bool(0.5) {
            Direction::Forward
        } else {
            Direction::Backward
        };
        vehicles.push(VehicleState {
            id: VehicleId((config.platoon_size + k) as u32),
            position: rng.random_range(0.0..=config.highway_length),
            lane: rng.random_range(0..config.lanes_per_direction),
            direction,
            speed: config.background_speed,
            is_platoon_member: false,
        });
    }
    Ok(ScenarioState {
        config,
        vehicles,
        time_s: 0.0,
    })
}

impl ScenarioState {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn platoon(&self) -> &[VehicleState] {
        &self.vehicles[..self.config.platoon_size]
    }

    pub fn background(&self) -> &[VehicleState] {
        &self.vehicles[self.config.platoon_size..]
    }

    pub fn vehicle(&self, id: VehicleId) -> Result<&VehicleState> {
        // Ids are dense indices by construction.
        self.vehicles
            .get(id.0 as usize)
            .filter(|v| v.id == id)
            .ok_or(Error::UnknownVehicle(id))
    }

    /// Advances every vehicle by `speed * dt` along its direction.
    pub fn step_mobility(&mut self, dt: f64) {
        debug_assert!(dt > 0.0);
        let length = self.config.highway_length;
        let platoon_size = self.config.platoon_size;

        // Platoon moves as a rigid column keyed on the leader.
        let leader = &self.vehicles[0];
        let mut lead_pos = leader.position + leader.direction.sign() * leader.speed * dt;
        if lead_pos > length {
            lead_pos -= length - self.config.platoon_extent();
        }
        for (k, v) in self.vehicles[..platoon_size].iter_mut().enumerate() {
            v.position = lead_pos - self.config.platoon_spacing * k as f64;
        }

        for v in &mut self.vehicles[platoon_size..] {
            let mut pos = v.position + v.direction.sign() * v.speed * dt;
            while pos > length {
                pos -= length;
            }
            while pos < 0.0 {
                pos += length;
            }
            v.position = pos;
        }
        self.time_s += dt;
    }

    /// Vehicles other than `id` within `range` metres (longitudinal distance),
    /// ordered by id.
    pub fn neighbors_in_range(&self, id: VehicleId, range: f64) -> Result<Vec<&VehicleState>> {
        let me = self.vehicle(id)?;
        Ok(self
            .vehicles
            .iter()
            .filter(|w| w.id != id && (w.position - me.position).abs() <= range)
            .collect())
    }

    /// Number of background vehicles within `range` of `position`.
    pub fn background_in_range(&self, position: f64, range: f64) -> usize {
        self.background()
            .iter()
            .filter(|w| (w.position - position).abs() <= range)
            .count()
    }

    /// Mid-point of the platoon column.
    pub fn platoon_center(&self) -> f64 {
        let p = self.platoon();
        0.5 * (p[0].position + p[p.len() - 1].position)
    }
}
