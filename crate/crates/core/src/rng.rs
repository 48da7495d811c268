//! Seed derivation. Every random stage draws from its own stream, keyed by
//! the run's master seed, the replicate index and a stage label, so results
//! do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derive a sub-seed from a parent seed and a stage label.
pub fn derive_seed(parent: u64, stage: &str) -> u64 {
    splitmix64(parent ^ splitmix64(fnv1a(stage)))
}

/// Seed for replicate `index` of a run with `master` seed.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index as u64 + 1)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
