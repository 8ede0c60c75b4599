//! Quality measures for finished samples and diagnostics of the
//! deterministic denoising chain.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::conditioning::Observation;
use crate::denoiser::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::linalg::{norm, norm_sq, sub};
use crate::rng::normal_vec;
use crate::sampler::{ddim_mean, ddim_step};
use crate::schedule::NoiseSchedule;

/// Mean and max of `|s₀ − r(x₀)|` over observed entries; zeros for an
/// empty observation.
pub fn constraint_error(obs: &Observation, x0: &[f64]) -> Result<(f64, f64)> {
    let resid = obs.residual(x0)?;
    if resid.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mean = resid.iter().map(|r| r.abs()).sum::<f64>() / resid.len() as f64;
    let max = resid.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok((mean, max))
}

/// Mean `|x[i] − x[N−1−i]|` over the `N/2` mirror pairs.
pub fn coherence_error_mirror(x0: &[f64]) -> Result<f64> {
    let pairs = x0.len() / 2;
    if pairs == 0 || !x0.len().is_multiple_of(2) {
        return Err(Error::InvalidConfig(alloc::format!(
            "mirror coherence needs an even, non-zero dimension, got {}",
            x0.len()
        )));
    }
    let n = x0.len();
    Ok((0..pairs).map(|i| (x0[i] - x0[n - 1 - i]).abs()).sum::<f64>() / pairs as f64)
}

/// Summary of one finished sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub constraint_mean_abs: f64,
    pub constraint_max_abs: f64,
    /// Only meaningful for mirror-structured data.
    pub coherence_error: Option<f64>,
    /// `(t, mean gap)` pairs, empty unless requested.
    pub gap_curve: Vec<(usize, f64)>,
}

impl MetricReport {
    pub fn new(obs: &Observation, x0: &[f64], mirror: bool) -> Result<Self> {
        let (mean, max) = constraint_error(obs, x0)?;
        Ok(Self {
            constraint_mean_abs: mean,
            constraint_max_abs: max,
            coherence_error: if mirror { Some(coherence_error_mirror(x0)?) } else { None },
            gap_curve: Vec::new(),
        })
    }
}

/// Average over `runs` unconditional deterministic trajectories of
/// `‖f^(t)(X̃ₜ) − X̃₀‖ / √N`, returned as `(t, gap)` for `t = T, …, 1`.
/// The chain runs with zero variance regardless of the schedule's setting.
pub fn gap_trajectory<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    runs: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    if runs == 0 {
        return Err(Error::InvalidConfig("need at least one trajectory".into()));
    }
    let t_max = schedule.len();
    let n = denoiser.dim();
    let mut totals = alloc::vec![0.0; t_max];
    for _ in 0..runs {
        let mut x = normal_vec(rng, n);
        let mut estimates = Vec::with_capacity(t_max);
        for t in (1..=t_max).rev() {
            let x0 = denoiser.value(schedule, &x, t)?;
            x = ddim_mean(schedule.alpha_bar(t), schedule.alpha_bar(t - 1), 0.0, &x, &x0);
            estimates.push(x0);
        }
        for (slot, est) in totals.iter_mut().zip(&estimates) {
            *slot += norm(&sub(est, &x)) / (n as f64).sqrt();
        }
    }
    Ok((1..=t_max).rev().zip(totals).map(|(t, s)| (t, s / runs as f64)).collect())
}

/// Monte-Carlo estimate of `E‖r(X̃₀) − r(f^(t)(X̃ₜ))‖² / M` along
/// unconditional trajectories drawn with the schedule's own variance: the
/// empirical value of the constraint variance at step `t`.
pub fn calibrate_xi<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    t: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    schedule.check_step(t)?;
    check_len("observation vs denoiser", denoiser.dim(), obs.dim())?;
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let op = obs.operator();
    let m = op.output_dim();
    if m == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..samples {
        let mut x = normal_vec(rng, denoiser.dim());
        let mut at_t = Vec::new();
        for s in (1..=schedule.len()).rev() {
            let step = ddim_step(schedule, denoiser, &x, s, rng)?;
            if s == t {
                at_t = op.apply(&step.x0_hat)?;
            }
            x = step.x_prev;
        }
        total += norm_sq(&sub(&op.apply(&x)?, &at_t)) / m as f64;
    }
    Ok(total / samples as f64)
}
