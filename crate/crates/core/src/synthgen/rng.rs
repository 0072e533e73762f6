//! Keyed random streams.
//!
//! Every random decision draws from a ChaCha8 stream whose seed is a
//! SplitMix64 mix of `(scene seed, layer id, purpose tag, index)`, so adding a
//! layer or re-sampling one constraint never shifts the randomness of any
//! other part of the scene.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
pub fn mix(value: u64) -> u64 {
    let mut z = value.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6669_6265_6e63_6800, |h, &p| mix(h ^ mix(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Layout = 1,
    Geometry = 2,
    Photometric = 3,
    Texture = 4,
    Shape = 5,
}

pub fn stream(seed: u64, layer: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(&[seed, layer, purpose as u64, index]))
}

/// Seed of one sequence inside a dataset; `attempt` advances when a sampled
/// sequence is rejected.
pub fn sequence_seed(dataset_seed: u64, sequence_id: u64, attempt: u64) -> u64 {
    key(&[dataset_seed, sequence_id, attempt])
}
