//! Seeded random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator threaded through every randomized operation.
pub type JoinRng = ChaCha8Rng;

/// A stream seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> JoinRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream number `key` under `seed`.
///
/// Streams with different keys never overlap, so parallel workers can each
/// take one without coordination.
pub fn derive_stream(seed: u64, key: u64) -> JoinRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// A child stream seeded from the parent's output.
pub fn fork(rng: &mut JoinRng) -> JoinRng {
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}

/// Uniform integer in `lo..=hi` without modulo bias.
#[inline]
pub fn rand_int(rng: &mut JoinRng, lo: u64, hi: u64) -> u64 {
    rng.random_range(lo..=hi)
}

/// Uniform index in `0..n`.
#[inline]
pub fn rand_index(rng: &mut JoinRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Uniform real in `[0, 1)`.
#[inline]
pub fn rand_unit(rng: &mut JoinRng) -> f64 {
    rng.random::<f64>()
}
