//! Counter-based stream derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha stream keyed by
//! `(seed, tag, indices...)`, so changing `m` or `T` never perturbs draws that
//! belong to other `(t, i)` cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod tag {
    pub const INPUT: u64 = 0x1;
    pub const NOISE: u64 = 0x2;
    pub const MEMORY: u64 = 0x3;
    pub const RESERVOIR: u64 = 0x4;
    pub const EVAL: u64 = 0x5;
    pub const PROBE: u64 = 0x6;
    pub const TRIAL: u64 = 0x7;
    pub const TRUTH: u64 = 0x8;
    pub const CHAIN: u64 = 0x9;
    pub const INIT: u64 = 0xa;
    pub const VALIDATE: u64 = 0xb;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a path of tags into a single 64-bit key.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
