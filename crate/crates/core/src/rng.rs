//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator seeded from
//! `derive_seed(master, stream)`, so a replication's randomness depends only
//! on the master seed and its own index, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream index reserved for pilot (centering) paths. Replication indices
/// are far below this value.
pub const PILOT_STREAM: u64 = u64::MAX - 1;

/// Stream index reserved for the internal Monte Carlo of moment functionals.
pub const MOMENT_STREAM: u64 = u64::MAX - 2;

/// The SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-stream seed: `splitmix64(master ^ splitmix64(stream))`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
