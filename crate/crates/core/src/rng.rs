//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a master `u64` through splitmix64 expansion, so stages and
//! parallel repetitions get independent, reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of stream indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream identifiers for pipeline stages.
pub mod stage {
    pub const SHARED: u64 = 1;
    pub const SELECT: u64 = 2;
    pub const FIT: u64 = 3;
    pub const SIMULATE: u64 = 4;
    pub const EXPERIMENT: u64 = 5;
    pub const CLUSTER: u64 = 6;
}
