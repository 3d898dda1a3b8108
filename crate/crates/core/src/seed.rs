//! Seed derivation and generator construction.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! Per-model and per-purpose seeds are derived from a root with a
//! SplitMix64 finalizer, so `derive(root, stream, i)` values are
//! well-mixed and distinct for distinct `(stream, i)` pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags for derived seed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Params = 2,
    Shuffle = 3,
    Memory = 4,
    HeldOut = 5,
    Embedding = 6,
}

/// Seed for item `index` of `stream` under `root`.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    mix64(mix64(root ^ mix64(stream as u64)) ^ index)
}
