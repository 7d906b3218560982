//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed, so changing how often one component samples never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers. Agents use `AGENT_BASE + index`.
pub mod stream {
    pub const SCENARIO: u64 = 1;
    pub const RADIO: u64 = 2;
    pub const ACK: u64 = 3;
    pub const BEACON: u64 = 4;
    pub const OCCUPANCY: u64 = 5;
    pub const SENSING: u64 = 6;
    pub const AGENT_BASE: u64 = 100;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
