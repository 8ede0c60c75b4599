use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::linalg::{semidefinite_factor, Cholesky, Matrix};
use crate::rng::normal_vec;
use crate::schedule::NoiseSchedule;

/// A Gaussian prior `N(m, S)` over states, used as an analytic stand-in for
/// the data distribution. As a denoiser it returns the exact posterior mean
/// `E[X₀ | Xₜ = x]`. `S` may be singular, down to a point mass (`S = 0`).
#[derive(Debug, Clone)]
pub struct GaussianWorld {
    mean: Vec<f64>,
    cov: Matrix,
    /// `L` with `S = L Lᵀ`, used for sampling.
    factor: Matrix,
}

impl PartialEq for GaussianWorld {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianWorld {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        check_len("covariance rows", mean.len(), cov.rows())?;
        check_len("covariance columns", mean.len(), cov.cols())?;
        if !cov.is_symmetric(1e-12) {
            return Err(Error::InvalidModel("covariance is not symmetric".into()));
        }
        let factor = semidefinite_factor(&cov)
            .map_err(|_| Error::InvalidModel("covariance is not positive semidefinite".into()))?;
        Ok(Self { mean, cov, factor })
    }

    /// Unit-variance coordinates where coordinate `i` and its mirror
    /// `n - 1 - i` have correlation `rho`.
    pub fn mirror(n: usize, rho: f64) -> Result<Self> {
        let mut cov = Matrix::identity(n);
        for i in 0..n {
            let j = n - 1 - i;
            if i != j {
                cov[(i, j)] = rho;
            }
        }
        Self::new(alloc::vec![0.0; n], cov)
    }

    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, Matrix::identity(n).scaled_plus_identity(var, 0.0))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = normal_vec(rng, self.mean.len());
        let l = &self.factor;
        (0..self.mean.len())
            .map(|i| self.mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }

    fn noisy_cov_factor(&self, alpha_bar: f64) -> Result<Cholesky> {
        self.cov
            .scaled_plus_identity(alpha_bar, 1.0 - alpha_bar)
            .cholesky()
            .map_err(|_| Error::Singular("gaussian denoiser solve"))
    }
}

impl Denoiser for GaussianWorld {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `m + √ᾱ S (ᾱS + (1−ᾱ)I)⁻¹ (x − √ᾱ m)`.
    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        schedule.check_step(t)?;
        check_len("gaussian denoiser input", self.dim(), x.len())?;
        let ab = schedule.alpha_bar(t);
        let s = ab.sqrt();
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - s * mi).collect();
        let y = self.noisy_cov_factor(ab)?.solve(&centered)?;
        let sy = self.cov.matvec(&y)?;
        Ok(self.mean.iter().zip(&sy).map(|(m, v)| m + s * v).collect())
    }

    /// `√ᾱ (ᾱS + (1−ᾱ)I)⁻¹ S v`; the Jacobian is constant in `x`.
    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>> {
        schedule.check_step(t)?;
        check_len("gaussian denoiser input", self.dim(), x.len())?;
        check_len("gaussian denoiser cotangent", self.dim(), v.len())?;
        let ab = schedule.alpha_bar(t);
        let sv = self.cov.matvec(v)?;
        let y = self.noisy_cov_factor(ab)?.solve(&sv)?;
        Ok(y.into_iter().map(|u| ab.sqrt() * u).collect())
    }
}
