//! Seeded random streams.
//!
//! Every run draws from a ChaCha8 generator keyed by `(seed, stream)`, and
//! normal variates come from `rand_distr::StandardNormal` (the ziggurat
//! method). Streams with different indices are independent, which lets runs
//! fan out in parallel while staying reproducible.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SamplerRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> SamplerRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}
