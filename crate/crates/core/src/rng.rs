//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by a
//! 64-bit seed and a stream id, so a trial's graph, opinions, fixed-edge
//! choice, and dynamics each get an independent, reproducible stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod streams {
    pub const GRAPH: u64 = 0;
    pub const OPINIONS: u64 = 1;
    pub const FIXED_EDGES: u64 = 2;
    pub const DYNAMICS: u64 = 3;
    pub const SAMPLING: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of trial `trial_index` under `base_seed`.
pub fn trial_seed(base_seed: u64, trial_index: u64) -> u64 {
    base_seed ^ trial_index
}
