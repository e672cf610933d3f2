//! Deterministic seed derivation.
//!
//! Every stochastic component takes a u64 seed and derives sub-streams with
//! [`mix`] / [`seed_for`]. The FNV-1a based mixing is stable across platforms
//! and releases, which is what makes byte-identical reruns possible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over a byte string.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Mix a seed with a stream index (splitmix64 finalizer).
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a base seed and a textual label.
pub fn seed_for(seed: u64, label: &str) -> u64 {
    mix(seed, hash_bytes(label.as_bytes()))
}

/// The project-wide RNG. ChaCha keeps streams identical on every platform.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
