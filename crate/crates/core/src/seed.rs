//! Deterministic seed derivation and the crate-wide RNG type.

use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

/// Seed streams, so that unrelated consumers of one base seed never collide.
pub mod stream {
    pub const SEARCH: u64 = 1;
    pub const CANDIDATE: u64 = 2;
    pub const RERANK: u64 = 3;
    pub const DATASET: u64 = 4;
    pub const CROSS_EVAL: u64 = 5;
    pub const SAMPLE: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
