//! Seeded, splittable random streams.
//!
//! Every experiment derives independent streams from one user seed. A stream
//! is a ChaCha12 generator keyed by the seed with the stream id selecting the
//! ChaCha stream, so `(seed, id)` pins the output bit for bit and different ids
//! never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream ids reserved by the experiments in this crate.
pub mod ids {
    pub const SOURCE: u64 = 1;
    pub const HELDOUT: u64 = 2;
    pub const MODEL_NOISE: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    /// Grid point `i` of an experiment uses `TARGET_BASE + i`.
    pub const TARGET_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
