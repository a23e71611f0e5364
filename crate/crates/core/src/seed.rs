//! Seed derivation.
//!
//! Every random stream in a run is derived from one global `u64` seed plus a
//! path of labels, e.g. `derive(seed, &["evolution", "mutate"])` followed by
//! [`derive_index`] for generation and individual numbers. Each label is
//! hashed with 64-bit FNV-1a, folded into the running state by XOR and then
//! mixed with the SplitMix64 finalizer. Streams with different label paths are
//! statistically independent; the same path always yields the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const ENV_GEN: &str = "env-gen";
pub const FEATURES: &str = "features";
pub const EVOLUTION: &str = "evolution";
pub const SCHEDULES: &str = "schedules";
pub const EVAL: &str = "eval";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of string labels.
pub fn derive(seed: u64, labels: &[&str]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, l| splitmix64(acc ^ fnv1a(l.as_bytes())))
}

/// Derive a child seed from `seed` and a numeric index.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
