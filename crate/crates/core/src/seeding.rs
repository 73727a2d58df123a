//! Stable per-task seed derivation.
//!
//! Every Monte Carlo replication draws from its own ChaCha8 stream seeded by
//! [`derive_seed`]`(root, coords)`. The derivation folds each coordinate into
//! the running state with the SplitMix64 finalizer:
//!
//! ```text
//! h = mix(root ^ 0x9E3779B97F4A7C15)
//! for c in coords: h = mix(h ^ mix(c + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `mix` is the SplitMix64 output function. Results never depend on
//! the order in which tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output mixing.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(root ^ GOLDEN), |h, &c| {
        mix64(h ^ mix64(c.wrapping_add(GOLDEN)))
    })
}

pub fn task_rng(root: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, coords))
}

// Stream tags keep unrelated experiment stages from sharing coordinates.
pub const TAG_CLOUD: u64 = 0xC10D;
pub const TAG_POOL: u64 = 0x9001;
pub const TAG_REPLICATION: u64 = 0x4E9;
pub const TAG_ENTROPY: u64 = 0xE47;
