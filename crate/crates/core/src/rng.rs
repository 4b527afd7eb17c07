//! Counter-based seed derivation. Every random draw in training is keyed
//! by `(base seed, purpose, iteration, item)`, so a run resumed at any
//! iteration replays exactly the same randomness without saving RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn keyed_rng(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// Purpose tags mixed into derived seeds.
pub mod purpose {
    pub const LABELED_EPOCH: u64 = 1;
    pub const UNLABELED_EPOCH: u64 = 2;
    pub const CROP: u64 = 3;
    pub const STUDENT_NOISE: u64 = 4;
    pub const TEACHER_NOISE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
    pub const INIT: u64 = 8;
}
