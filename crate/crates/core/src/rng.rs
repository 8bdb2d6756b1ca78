//! Seeded random streams.
//!
//! Every stochastic component (weight init, dropout masks, crop sampling,
//! synthetic data) draws from a ChaCha8 stream whose seed is derived from a
//! root seed and a label, so results do not depend on evaluation order.

use rand::SeedableRng;
use sha2::{Digest, Sha256};

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Mixes a root seed with a label into an independent 64-bit seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn derived(seed: u64, label: &str) -> Rng {
    seeded(derive_seed(seed, label))
}
