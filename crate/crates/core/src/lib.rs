//! Diffusion-model inpainting by posterior optimization.
//!
//! This crate carries the numerical core: noise schedules, denoiser backends
//! (an exact Gaussian MMSE denoiser and a small epsilon-prediction MLP with
//! hand-written backpropagation), DDIM sampling kernels, reveal operators,
//! the CoPaint greedy MAP sampler with time travel, replacement baselines,
//! exact Gaussian conditioning oracles, and evaluation metrics.
//!
//! Everything here is `no_std` with `alloc`. File formats, IO and the command
//! line live in the companion `copaint-cli` crate.

#![no_std]
// Float math comes from `num_traits::Float`. Whenever std is linked into the
// build (tests, or a dependency with std features on) its inherent methods
// shadow the trait, so those imports carry `allow(unused_imports)`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod conditioning;
pub mod copaint;
pub mod data;
pub mod denoiser;
mod error;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use conditioning::{Geometry, Observation, RevealOperator};
pub use copaint::{Anchor, CoPaintConfig, PrototypeConfig, RunRecord, VisitEntry};
pub use denoiser::{ConstantDenoiser, Denoiser, GaussianWorld, MlpDenoiser};
pub use error::{Error, Result};
pub use schedule::NoiseSchedule;
