//! Closed-form answers for Gaussian worlds: exact conditionals, noisy
//! marginals and posterior means, used to check samplers against truth.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::conditioning::Observation;
use crate::denoiser::GaussianWorld;
use crate::error::{check_len, Error, Result};
use crate::linalg::{sub, Matrix};
use crate::schedule::NoiseSchedule;

/// Largest dimension the oracle accepts.
pub const MAX_DIM: usize = 64;

/// `p(X_hidden | X_revealed = s0)` for a Gaussian world.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub dim: usize,
    pub revealed: Vec<usize>,
    pub hidden: Vec<usize>,
    pub values: Vec<f64>,
    /// Mean over the hidden coordinates.
    pub mean: Vec<f64>,
    /// Covariance over the hidden coordinates.
    pub cov: Matrix,
}

impl ConditionalGaussian {
    /// Full-length vector with `values` on revealed coordinates and the
    /// conditional mean elsewhere.
    pub fn full_mean(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim];
        for (&i, &v) in self.revealed.iter().zip(&self.values) {
            out[i] = v;
        }
        for (&i, &v) in self.hidden.iter().zip(&self.mean) {
            out[i] = v;
        }
        out
    }

    /// Conditional law of the hidden block as a world of its own.
    pub fn hidden_world(&self) -> Result<GaussianWorld> {
        GaussianWorld::new(self.mean.clone(), self.cov.clone())
    }

    /// Picks the hidden coordinates out of a full-length state.
    pub fn hidden_part(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.dim, x.len())?;
        Ok(self.hidden.iter().map(|&i| x[i]).collect())
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n > MAX_DIM {
        return Err(Error::InvalidConfig(format!("oracle supports at most {MAX_DIM} dimensions, got {n}")));
    }
    Ok(())
}

/// Conditions on the revealed pixels of `obs` (pixel masks only).
pub fn condition(world: &GaussianWorld, obs: &Observation) -> Result<ConditionalGaussian> {
    let mask = obs
        .operator()
        .mask()
        .ok_or(Error::Unsupported("the oracle conditions on pixel masks only"))?;
    check_len("mask", world.mean().len(), mask.len())?;
    let revealed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    condition_on(world, &revealed, obs.s0())
}

/// Schur-complement conditioning of `N(m, S)` on `x[revealed] = values`.
pub fn condition_on(world: &GaussianWorld, revealed: &[usize], values: &[f64]) -> Result<ConditionalGaussian> {
    let n = world.mean().len();
    check_dim(n)?;
    check_len("revealed values", revealed.len(), values.len())?;
    let mut is_revealed = alloc::vec![false; n];
    for &i in revealed {
        if i >= n || is_revealed[i] {
            return Err(Error::InvalidConfig(format!("bad revealed index {i}")));
        }
        is_revealed[i] = true;
    }
    schur(world, revealed, values)
}

fn schur(world: &GaussianWorld, revealed: &[usize], values: &[f64]) -> Result<ConditionalGaussian> {
    let m = world.mean();
    let s = world.cov();
    let n = m.len();
    let hidden: Vec<usize> = (0..n).filter(|i| !revealed.contains(i)).collect();
    let m_h: Vec<f64> = hidden.iter().map(|&i| m[i]).collect();
    let s_hh = s.select(&hidden, &hidden);
    let (mean, cov) = if revealed.is_empty() {
        (m_h, s_hh)
    } else {
        let m_r: Vec<f64> = revealed.iter().map(|&i| m[i]).collect();
        let s_rr = s.select(revealed, revealed).cholesky()?;
        let s_rh = s.select(revealed, &hidden);
        let w = s_rr.solve(&sub(values, &m_r))?;
        let shift = s_rh.transpose().matvec(&w)?;
        let mean = m_h.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let k = s_rh.transpose().matmul(&s_rr.solve_matrix(&s_rh)?)?;
        let h = hidden.len();
        let mut data = Vec::with_capacity(h * h);
        for i in 0..h {
            for j in 0..h {
                // Symmetrize to wash out rounding.
                data.push(s_hh[(i, j)] - 0.5 * (k[(i, j)] + k[(j, i)]));
            }
        }
        (mean, Matrix::from_row_major(h, h, data)?)
    };
    Ok(ConditionalGaussian {
        dim: n,
        revealed: revealed.to_vec(),
        hidden,
        values: values.to_vec(),
        mean,
        cov,
    })
}

/// Law of `Xₜ` when `X₀ ~ N(m, S)`: `N(√ᾱₜ m, ᾱₜ S + (1−ᾱₜ) I)`.
pub fn exact_marginal(world: &GaussianWorld, schedule: &NoiseSchedule, t: usize) -> Result<GaussianWorld> {
    if t > schedule.len() {
        return Err(Error::StepOutOfRange { t, max: schedule.len() });
    }
    let ab = schedule.alpha_bar(t);
    let mean = world.mean().iter().map(|v| ab.sqrt() * v).collect();
    GaussianWorld::new(mean, world.cov().scaled_plus_identity(ab, 1.0 - ab))
}

/// `E[X₀ | Xₜ = x]` obtained by conditioning the joint law of `(X₀, Xₜ)`
/// on its second block.
pub fn posterior_mean_given_noisy(world: &GaussianWorld, alpha_bar: f64, x: &[f64]) -> Result<Vec<f64>> {
    let n = world.mean().len();
    check_dim(n)?;
    check_len("noisy state", n, x.len())?;
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha_bar must lie in (0, 1), got {alpha_bar}")));
    }
    let s = world.cov();
    let sa = alpha_bar.sqrt();
    let mut data = alloc::vec![0.0; 4 * n * n];
    let width = 2 * n;
    for i in 0..n {
        for j in 0..n {
            let v = s[(i, j)];
            data[i * width + j] = v;
            data[i * width + n + j] = sa * v;
            data[(n + i) * width + j] = sa * v;
            data[(n + i) * width + n + j] = alpha_bar * v + if i == j { 1.0 - alpha_bar } else { 0.0 };
        }
    }
    let mut mean = world.mean().to_vec();
    mean.extend(world.mean().iter().map(|v| sa * v));
    let joint = GaussianWorld::new(mean, Matrix::from_row_major(width, width, data)?)?;
    let noisy: Vec<usize> = (n..width).collect();
    let cond = schur(&joint, &noisy, x)?;
    Ok(cond.mean)
}
