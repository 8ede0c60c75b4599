//! Diffusion noise schedules and the DDIM variance rule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// The reproducible description of a schedule: a linear β grid over
/// `train_steps`, the DDIM variance knob, and an optional sub-grid of
/// selected source steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eta: f64,
    pub indices: Option<Vec<usize>>,
}

impl ScheduleSpec {
    pub fn linear(train_steps: usize, eta: f64) -> Self {
        Self {
            train_steps,
            beta_start: 1e-4,
            beta_end: 0.02,
            eta,
            indices: None,
        }
    }

    /// `sampling_steps` evenly spaced source steps ending at `train_steps`.
    pub fn with_sampling_steps(mut self, sampling_steps: usize) -> Self {
        self.indices = if sampling_steps == self.train_steps {
            None
        } else {
            Some(evenly_spaced_steps(self.train_steps, sampling_steps))
        };
        self
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        let base = NoiseSchedule::linear(self.train_steps, self.beta_start, self.beta_end, self.eta)?;
        match &self.indices {
            None => Ok(base),
            Some(idx) => base.subsequence(idx),
        }
    }
}

/// `n` strictly increasing steps in `1..=total`, evenly spaced, last = `total`.
///
/// Returns an empty list for `n == 0`; `n > total` is clamped to `total`.
pub fn evenly_spaced_steps(total: usize, n: usize) -> Vec<usize> {
    let n = n.min(total);
    (1..=n)
        .map(|i| ((i as u128 * total as u128 + n as u128 / 2) / n as u128) as usize)
        .collect()
}

/// Per-step variances of a (possibly sub-sampled) diffusion process.
///
/// All sequences are indexed by step `t` in `1..=T`; index 0 holds the
/// `ᾱ₀ = 1` convention (and unused zeros for the other sequences).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    source_steps: Vec<usize>,
    source_len: usize,
    eta: f64,
}

fn ddim_sigma(alpha_bar_prev: f64, alpha_bar: f64, eta: f64) -> f64 {
    eta * ((1.0 - alpha_bar_prev) / (1.0 - alpha_bar)).sqrt() * (1.0 - alpha_bar / alpha_bar_prev).sqrt()
}

impl NoiseSchedule {
    /// Linear β from `beta_start` to `beta_end` over `steps` steps, with the
    /// DDIM variance `σₜ = eta·√((1−ᾱₜ₋₁)/(1−ᾱₜ))·√(1−ᾱₜ/ᾱₜ₋₁)` and `σ₁ = 0`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, eta: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("step count must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar, (0..=steps).collect(), steps, eta)
    }

    /// A schedule with explicit `ᾱ₁..ᾱ_T` (strictly decreasing in `(0, 1)`).
    pub fn from_alpha_bars(alpha_bars: &[f64], eta: f64) -> Result<Self> {
        if alpha_bars.is_empty() {
            return Err(Error::InvalidSchedule("step count must be at least 1".into()));
        }
        let mut ab = Vec::with_capacity(alpha_bars.len() + 1);
        ab.push(1.0);
        ab.extend_from_slice(alpha_bars);
        Self::from_alpha_bar(ab, (0..=alpha_bars.len()).collect(), alpha_bars.len(), eta)
    }

    fn from_alpha_bar(alpha_bar: Vec<f64>, source_steps: Vec<usize>, source_len: usize, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidSchedule(format!("eta must lie in [0, 1], got {eta}")));
        }
        let steps = alpha_bar.len() - 1;
        let mut beta = vec![0.0; steps + 1];
        let mut alpha = vec![1.0; steps + 1];
        let mut sigma = vec![0.0; steps + 1];
        for t in 1..=steps {
            alpha[t] = alpha_bar[t] / alpha_bar[t - 1];
            beta[t] = 1.0 - alpha[t];
            if t >= 2 {
                sigma[t] = ddim_sigma(alpha_bar[t - 1], alpha_bar[t], eta);
            }
        }
        let schedule = Self {
            beta,
            alpha,
            alpha_bar,
            sigma,
            source_steps,
            source_len,
            eta,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    fn validate(&self) -> Result<()> {
        if self.alpha_bar[0] != 1.0 {
            return Err(Error::InvalidSchedule("alpha_bar_0 must be 1".into()));
        }
        for t in 1..=self.len() {
            let (prev, cur) = (self.alpha_bar[t - 1], self.alpha_bar[t]);
            if !(cur < prev && cur > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "alpha_bar must decrease strictly inside (0, 1); fails at t={t}"
                )));
            }
            if !(self.beta[t] > 0.0 && self.beta[t] < 1.0) {
                return Err(Error::InvalidSchedule(format!("beta_{t} outside (0, 1)")));
            }
            let s2 = self.sigma[t] * self.sigma[t];
            if s2.is_nan() || s2 > (1.0 - prev) * (1.0 + 1e-12) {
                return Err(Error::InvalidSchedule(format!(
                    "sigma_{t}^2 = {s2} exceeds 1 - alpha_bar_(t-1) = {}",
                    1.0 - prev
                )));
            }
        }
        if self.sigma[1] != 0.0 {
            return Err(Error::InvalidSchedule("sigma_1 must be 0".into()));
        }
        Ok(())
    }

    /// Restricts the schedule to the given strictly increasing steps, the last
    /// of which must be `T`. σ is recomputed over consecutive selected pairs.
    pub fn subsequence(&self, steps: &[usize]) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSchedule("empty step list".into()));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) || steps[0] == 0 {
            return Err(Error::InvalidSchedule("steps must be strictly increasing and >= 1".into()));
        }
        if *steps.last().unwrap() != self.len() {
            return Err(Error::InvalidSchedule(format!(
                "last step must equal T = {}, got {}",
                self.len(),
                steps.last().unwrap()
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps.len() + 1);
        alpha_bar.push(1.0);
        alpha_bar.extend(steps.iter().map(|&s| self.alpha_bar[s]));
        let mut source = Vec::with_capacity(steps.len() + 1);
        source.push(0);
        source.extend(steps.iter().map(|&s| self.source_steps[s]));
        Self::from_alpha_bar(alpha_bar, source, self.source_len, self.eta)
    }

    /// Same ᾱ grid, σ recomputed for a different `eta`.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::from_alpha_bar(self.alpha_bar.clone(), self.source_steps.clone(), self.source_len, eta)
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::StepOutOfRange { t, max: self.len() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    /// ᾱₜ for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar[1..]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma[1..]
    }

    /// Step of the original (training) schedule that step `t` came from.
    pub fn source_step(&self, t: usize) -> usize {
        self.source_steps[t]
    }

    /// Length of the original schedule this one was sub-sampled from.
    pub fn source_len(&self) -> usize {
        self.source_len
    }
}
