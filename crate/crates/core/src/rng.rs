//! Seed derivation and counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from a master seed and a path of indices (cell, replication,
//! replicate, chunk ...). Streams never share state, so results do not depend
//! on how work is scheduled across threads.
//!
//! The mixing function is SplitMix64's finalizer applied to
//! `seed ^ (index + 1) * 0x9E3779B97F4A7C15`:
//!
//! ```text
//! z = seed ^ ((index + 1) * 0x9E3779B97F4A7C15)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! mix(seed, index) = z ^ (z >> 31)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a seed from a hierarchy of indices, e.g. `[cell, replication]`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| mix(s, i))
}

/// Independent ChaCha8 stream keyed by `seed`.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
