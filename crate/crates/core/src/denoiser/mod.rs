//! The `f^(t)` capability: predict the clean state from a noisy one, with
//! vector-Jacobian products for gradient-based MAP steps.

mod gaussian;
mod mlp;
mod train;

use alloc::vec::Vec;

use crate::error::{check_len, Result};
use crate::schedule::NoiseSchedule;

pub use gaussian::GaussianWorld;
pub use mlp::{MlpDenoiser, MlpLayout};
pub use train::{train_mlp, TrainConfig, TrainOutcome};

/// Predicts `X₀` from `Xₜ`.
///
/// Implementations must be deterministic in `(x, t)` and their parameters.
pub trait Denoiser {
    /// State dimension `N`.
    fn dim(&self) -> usize;

    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>>;

    /// `Jᵀ v` with `J = ∂f^(t)/∂x` evaluated at `x`.
    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>>;

    /// Value and pullback in one call; backends that cache a forward pass
    /// override this.
    fn value_and_vjp(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        v: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.value(schedule, x, t)?, self.vjp(schedule, x, t, v)?))
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        (**self).value(schedule, x, t)
    }

    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>> {
        (**self).vjp(schedule, x, t, v)
    }

    fn value_and_vjp(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        v: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        (**self).value_and_vjp(schedule, x, t, v)
    }
}

/// Denoiser of a point-mass prior: always answers `value`, whatever the
/// input, so its Jacobian is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDenoiser {
    value: Vec<f64>,
}

impl ConstantDenoiser {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }
}

impl Denoiser for ConstantDenoiser {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        schedule.check_step(t)?;
        check_len("denoiser input", self.value.len(), x.len())?;
        Ok(self.value.clone())
    }

    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>> {
        schedule.check_step(t)?;
        check_len("denoiser input", self.value.len(), x.len())?;
        check_len("cotangent", self.value.len(), v.len())?;
        Ok(alloc::vec![0.0; v.len()])
    }
}
