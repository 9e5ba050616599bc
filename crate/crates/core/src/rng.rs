//! Seeded random number streams.
//!
//! Every stochastic routine in the crate draws from a [`ChaCha8Rng`] derived
//! from a user seed plus a fixed stream id, so independent consumers of the
//! same seed never share a stream and results are reproducible bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used across the crate. Keeping them in one place guarantees
/// two consumers of the same seed never draw correlated values.
pub mod stream {
    pub const NET_INIT: u64 = 1;
    pub const DUAL_SOURCE_BATCH: u64 = 2;
    pub const DUAL_TARGET_BATCH: u64 = 3;
    pub const GAN_STEPSIZE_INIT: u64 = 4;
    pub const GAN_DISC_INIT: u64 = 5;
    pub const GAN_SOURCE_BATCH: u64 = 6;
    pub const GAN_TARGET_BATCH: u64 = 7;
    pub const DATA_SOURCE: u64 = 8;
    pub const DATA_TARGET: u64 = 9;
    pub const SPLIT: u64 = 10;
    pub const AUDIT_PAIRS: u64 = 11;
    pub const MONOTONICITY_PAIRS: u64 = 12;
}

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
