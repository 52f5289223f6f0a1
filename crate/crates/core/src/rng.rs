//! Seeded random streams.
//!
//! Every consumer gets its own ChaCha stream derived from `(seed, stream)`,
//! so independent parts of a run (shuffling, negative sampling, mixup
//! coefficients, Monte Carlo workers) never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids used across the crates.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SAMPLER: u64 = 4;
    pub const MIXUP: u64 = 5;
    pub const MEMORY: u64 = 6;
    pub const TEACHER: u64 = 7;
    pub const EVAL_DATA: u64 = 8;
    /// Monte Carlo workers use `MONTE_CARLO + chunk index`.
    pub const MONTE_CARLO: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
