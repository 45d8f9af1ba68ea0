//! Seeded randomness. Every random draw in a simulation run comes from a
//! ChaCha20 stream derived from one 64-bit seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};

pub type SimRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent sub-stream for a named component, so adding draws in one
/// component never shifts the sequence seen by another.
pub fn derive(seed: u64, label: &str) -> SimRng {
    ChaCha20Rng::from_seed(derive_bytes(seed, label))
}

pub fn derive_bytes(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"hchain/rng/v1");
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}
