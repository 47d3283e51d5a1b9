//! The single run-level random generator. Initialization, dropout masks, data
//! synthesis and shuffling all draw from generators seeded here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub fn run_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream used for synthetic data, independent of the model stream for the same seed.
pub const DATA_STREAM: u64 = 1;

/// Generator for `seed` on a separate ChaCha stream.
pub fn stream_rng(seed: u64, stream: u64) -> RunRng {
    let mut r = run_rng(seed);
    r.set_stream(stream);
    r
}
