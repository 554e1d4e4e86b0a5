//! Seeded random streams.
//!
//! Every random draw in the crate goes through ChaCha8 (`rand_chacha`), seeded
//! with `SeedableRng::seed_from_u64(seed)` and then switched to a numbered
//! stream with `set_stream`. Streams keep independent consumers (network
//! weights, latent codes, per-bin noise, ...) from perturbing each other, so a
//! trace is bit-reproducible for a given build and seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids reserved by the library. Per-bin noise streams start at
/// [`BIN_STREAM_BASE`] and are offset by the bin index.
pub mod streams {
    pub const WEIGHTS: u64 = 1;
    pub const LATENT_CODES: u64 = 2;
    pub const PRIOR_SAMPLE: u64 = 3;
    pub const TEST_DATA: u64 = 4;
    pub const BIN_STREAM_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn bin_stream(seed: u64, bin: usize) -> Rng {
    stream(seed, streams::BIN_STREAM_BASE + bin as u64)
}
