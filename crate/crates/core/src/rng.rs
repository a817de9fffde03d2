//! Seed derivation. A root seed fans out into independent ChaCha streams,
//! one per subsample or trial index, so serial and parallel runs draw the
//! same numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream reserved for the Laplace noise of a mechanism run.
pub const NOISE_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for the `index`-th independent repetition under `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // Offset keeps child seeds from reusing the subsample streams of `seed`.
    stream(seed ^ 0x9e37_79b9_7f4a_7c15, index).next_u64()
}
