//! Seeded randomness shared by the run loop and the mock components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Run-scoped generator. ChaCha keeps streams identical across platforms and
/// serializes its full position, which is what resume relies on.
pub type RunRng = ChaCha8Rng;

pub fn run_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit digest of a seed and a list of labelled parts.
pub fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Uniform value in `[0, 1)` derived from [`stable_hash`].
pub fn stable_unit(seed: u64, parts: &[&str]) -> f64 {
    (stable_hash(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Independent generator keyed by a seed and labelled parts.
pub fn derived_rng(seed: u64, parts: &[&str]) -> RunRng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, parts))
}
