//! Seeded random sources.
//!
//! Every experiment is keyed by a single `u64` seed. Independent units of
//! work (a grid point, a trial inside a grid point) get their own stream
//! derived from the seed and their coordinates, so results do not depend on
//! how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &i| mix(acc ^ mix(i)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(seed, path))`.
pub fn child_rng(seed: u64, path: &[u64]) -> SimRng {
    rng_from_seed(derive_seed(seed, path))
}
