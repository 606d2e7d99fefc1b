//! Seed derivation.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded through
//! [`derive_seed`]: the root seed is mixed with an FNV-1a hash of the stage
//! name and an item index, then passed through SplitMix64. The scheme is
//! platform-independent, so a root seed pins every generated artifact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for item `index` of pipeline stage `stage` under `root`.
pub fn derive_seed(root: u64, stage: &str, index: u64) -> u64 {
    let a = splitmix64(root ^ fnv1a(stage));
    splitmix64(a ^ index.wrapping_mul(GOLDEN))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
