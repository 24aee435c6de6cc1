//! Seed derivation for per-sample random streams.
//!
//! Every sample draws from its own ChaCha8 stream seeded with
//! `derive_seed(master, purpose, index)`, so results do not depend on which
//! worker processes which sample or in what order.
//!
//! The derivation chains the SplitMix64 finalizer:
//! `mix(mix(mix(master) ^ purpose) ^ index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// What a derived stream is used for. Distinct purposes give independent
/// streams for the same sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Mix = 1,
    Geometry = 2,
    Split = 3,
    Resample = 4,
    Mask = 5,
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ purpose as u64) ^ index)
}

pub fn seeded(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, purpose: Purpose, index: u64) -> SampleRng {
    seeded(derive_seed(master, purpose, index))
}
