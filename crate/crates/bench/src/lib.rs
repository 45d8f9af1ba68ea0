//! Fixtures shared by the criterion benches.

use hchain_core::rng;
use hchain_core::simnet::ScenarioSpec;
use rand::RngCore;

pub const PAYLOAD_SIZES: [usize; 4] = [1_000, 10_000, 100_000, 1_000_000];

/// Deterministic random payload of `size` bytes.
pub fn payload(size: usize, seed: u64) -> Vec<u8> {
    let mut buf = vec![0u8; size];
    rng::derive(seed, "bench/payload").fill_bytes(&mut buf);
    buf
}

pub fn scenario(patients: usize, reading_count: usize) -> ScenarioSpec {
    ScenarioSpec { patients, reading_count, ..ScenarioSpec::default() }
}
