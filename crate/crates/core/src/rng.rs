//! Deterministic seeding helpers.
//!
//! Every random draw in the crate flows through a ChaCha8 stream whose seed is
//! derived from a user seed plus a stable label, so a (config, seed) pair
//! reproduces the same bytes regardless of call order elsewhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, the usual seed-mixing finalizer.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives an independent RNG stream for `label` under `seed`.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha8Rng {
    stream(splitmix64(seed ^ fnv1a64(label.as_bytes())))
}

/// Derives an independent RNG stream for a (label, index) pair.
pub fn derive_rng_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ fnv1a64(label.as_bytes())).wrapping_add(splitmix64(index));
    stream(splitmix64(mixed))
}

fn stream(state: u64) -> ChaCha8Rng {
    let mut seed_bytes = [0u8; 32];
    let mut s = state;
    for chunk in seed_bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed_bytes)
}
