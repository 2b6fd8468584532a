//! Seeded randomness. Every random decision in the crate flows from a `u64`
//! seed through these helpers, so runs are reproducible bit-for-bit.

use rand::SeedableRng;

/// The one RNG used everywhere; ChaCha8 keeps streams stable across platforms.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Derives an independent stream from a master seed and a role label, so that
/// e.g. dataset generation and weight initialization never share a stream.
pub fn derive_rng(seed: u64, label: &str) -> SeededRng {
    let mut state = seed ^ fnv1a64(label.as_bytes());
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    SeededRng::from_seed(bytes)
}

/// FNV-1a 64-bit hash; used for stream derivation and config fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
