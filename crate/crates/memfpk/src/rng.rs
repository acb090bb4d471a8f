//! Seed derivation and per-sample random streams.
//!
//! Ensembles must be reproducible bit-for-bit regardless of how samples are
//! scheduled across worker threads. Every sample therefore owns an
//! independent RNG whose seed is a pure function of the master seed and the
//! sample index.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Mixes a master seed and a sample index into an independent 64-bit seed.
///
/// This is the SplitMix64 output function applied to
/// `master + (index + 1)·0x9E3779B97F4A7C15` (the golden-ratio increment).
/// SplitMix64 is a bijective finalizer with full avalanche, so distinct
/// `(master, index)` pairs map to well-separated seeds; the `+ 1` keeps
/// `derive_seed(m, 0)` from collapsing onto a plain hash of `m`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for one sample of an ensemble.
///
/// ChaCha12 is used for its platform-independent output: the same
/// `(master, index)` yields the same draws on every architecture.
pub fn stream_rng(master: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, index))
}
