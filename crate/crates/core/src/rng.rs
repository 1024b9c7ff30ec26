//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream derived from a
//! single `u64` seed, so adding draws to one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Sessions = 1,
    ThermalParams = 2,
    Split = 3,
    Member = 4,
}

pub fn seeded_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
