//! Hybrid vehicular communication simulator.
//!
//! Platoon vehicles carry two radio access technologies (ITS-G5 and LTE-V2X
//! PC5) and pick one of four communication modes per beacon: single ITS-G5,
//! single LTE, redundant (duplicate on both) or division (half payload on
//! each). The crate contains the channel abstraction, the hybrid
//! communication layer with its acknowledgment bookkeeping, a from-scratch
//! Q-network trainer, static and TOPSIS baselines, and the discrete-event
//! engine that ties them together.

pub mod agent;
pub mod baselines;
pub mod config;
pub mod engine;
pub mod error;
pub mod hybrid;
pub mod nn;
pub mod output;
pub mod radio;
pub mod rng;
pub mod scenario;
pub mod validate;

pub use error::{Error, Result};
