//! Seeded random streams.
//!
//! Every random decision in a run flows from one `u64` seed. Independent
//! streams (the GA itself, each fitness evaluation, each fold shuffle) are
//! derived with [`derive_seed`] so that evaluating children in parallel
//! never perturbs the GA's own stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used when deriving sub-seeds.
pub mod stream {
    pub const GA: u64 = 0x4741;
    pub const EVAL: u64 = 0x4556;
    pub const FOLDS: u64 = 0x464f;
    pub const INIT: u64 = 0x494e;
    pub const SHUFFLE: u64 = 0x5348;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a stream tag and an index.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, stream: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, stream, index))
}
