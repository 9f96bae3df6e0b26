//! Deterministic substream derivation.
//!
//! Every random task draws from its own generator seeded by mixing the master
//! seed with a command tag and the task index, so results do not depend on
//! how tasks are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha12Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under `tag`.
pub fn substream_seed(master_seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master_seed) ^ tag) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn substream(master_seed: u64, tag: u64, index: u64) -> Stream {
    Stream::seed_from_u64(substream_seed(master_seed, tag, index))
}

/// Stable 64-bit tag for a command or sampler name (FNV-1a).
pub const fn tag(name: &str) -> u64 {
    let bytes = name.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}
