//! Seed derivation.
//!
//! Every randomized component derives its stream as
//! `ChaCha8Rng::seed_from_u64(splitmix64(seed ⊕ splitmix64(stream)))`, so
//! (seed, stream-index) pairs map to statistically independent, platform- and
//! version-stable generators. ChaCha8 is a specified cipher, so identical
//! seeds reproduce identical sequences everywhere (unlike `StdRng`, whose
//! algorithm is unspecified and may change between releases).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a fixed-point-free bijective mixer.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-generator for (`seed`, `stream`).
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}
