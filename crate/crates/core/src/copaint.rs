//! The CoPaint sampler: greedy per-step MAP optimization along the DDIM
//! chain, with optional time travel and multi-step estimates of `X₀`, plus
//! the prototype optimizer that differentiates through the full rollout.

use alloc::format;
use alloc::vec::Vec;
use core::time::Duration;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::conditioning::Observation;
use crate::denoiser::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy, norm, norm_sq};
use crate::rng::normal_vec;
use crate::sampler::{ddim_step, time_travel, time_travel_moments, DeterministicPath, PathTape};
use crate::schedule::{NoiseSchedule, ScheduleSpec};

/// Sampler hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CoPaintConfig {
    /// Number of reverse steps `T`.
    pub steps: usize,
    /// Gradient-descent updates per visit `G`.
    pub grad_steps: usize,
    /// Base learning rate; the step at `t` is `learning_rate·√ᾱₜ`.
    pub learning_rate: f64,
    /// Geometric base of the constraint variance `ξ′ₜ² = xi_decay^−(T−t)`.
    pub xi_decay: f64,
    /// Time-travel interval `τ`.
    pub travel_interval: usize,
    /// Time-travel frequency `K` (rewinds per window); 0 disables it.
    pub travel_count: usize,
    /// Substeps `H` for the estimate of `X₀`.
    pub substeps: usize,
    /// DDIM variance knob used to build the schedule.
    pub sigma_eta: f64,
    pub seed: u64,
    /// Project the final state onto the constraint. `None` picks the
    /// operator's default: on for pixel masks, off for pooling.
    pub final_projection: Option<bool>,
}

impl Default for CoPaintConfig {
    fn default() -> Self {
        Self {
            steps: 250,
            grad_steps: 2,
            learning_rate: 0.02,
            xi_decay: 1.012,
            travel_interval: 10,
            travel_count: 1,
            substeps: 1,
            sigma_eta: 0.0,
            seed: 0,
            final_projection: None,
        }
    }
}

impl CoPaintConfig {
    /// CoPaint with time travel; same as `default()`.
    pub fn copaint_tt() -> Self {
        Self::default()
    }

    /// CoPaint without time travel.
    pub fn copaint() -> Self {
        Self {
            travel_count: 0,
            ..Self::default()
        }
    }

    /// One gradient step per visit over 100 reverse steps.
    pub fn copaint_fast() -> Self {
        Self {
            steps: 100,
            grad_steps: 1,
            travel_count: 0,
            ..Self::default()
        }
    }

    /// Linear-β schedule over `train_steps` sub-sampled to `steps`.
    pub fn schedule_spec(&self, train_steps: usize) -> ScheduleSpec {
        ScheduleSpec::linear(train_steps, self.sigma_eta).with_sampling_steps(self.steps)
    }

    pub fn projects_final(&self, obs: &Observation) -> bool {
        self.final_projection.unwrap_or(obs.operator().is_pixel_mask())
    }

    /// Rejects configs that do not match `schedule` or for which plain
    /// gradient descent on an anchor quadratic would diverge
    /// (`ηₜ / var ≥ 2`).
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if schedule.len() != self.steps {
            return fail(format!("config has T = {} but the schedule has {} steps", self.steps, schedule.len()));
        }
        if schedule.eta() != self.sigma_eta {
            return fail(format!("config sigma_eta = {} but the schedule uses {}", self.sigma_eta, schedule.eta()));
        }
        if self.travel_interval == 0 {
            return fail("time-travel interval must be at least 1".into());
        }
        if self.substeps == 0 {
            return fail("substep count must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.xi_decay.is_finite() && self.xi_decay > 0.0) {
            return fail(format!("xi_decay must be finite and positive, got {}", self.xi_decay));
        }
        if self.grad_steps == 0 {
            return Ok(());
        }
        let t_max = schedule.len();
        let check = |t: usize, var: f64| -> Result<()> {
            if var > 0.0 {
                let ratio = learning_rate(self, schedule, t) / var;
                if ratio >= 2.0 {
                    return Err(Error::UnstableStep { t, ratio });
                }
            }
            Ok(())
        };
        for t in 1..t_max {
            let s = schedule.sigma(t + 1);
            check(t, s * s)?;
        }
        if self.travel_count > 0 {
            let tau = self.travel_interval;
            for t in (0..=t_max.saturating_sub(tau)).step_by(tau) {
                if t + tau < t_max {
                    check(t + tau, 1.0 - schedule.alpha_bar(t + tau) / schedule.alpha_bar(t))?;
                }
            }
        }
        Ok(())
    }
}

/// `ξ′ₜ² = xi_decay^−(T−t)`.
pub fn xi_schedule(config: &CoPaintConfig, t: usize) -> f64 {
    let exponent = config.steps.saturating_sub(t) as i32;
    config.xi_decay.powi(-exponent)
}

/// `ηₜ = learning_rate·√ᾱₜ`.
pub fn learning_rate(config: &CoPaintConfig, schedule: &NoiseSchedule, t: usize) -> f64 {
    config.learning_rate * schedule.alpha_bar(t).sqrt()
}

/// Gaussian regularizer `‖x − mean‖² / (2·var)` around the state that
/// produced the current variable. A zero variance pins the variable to
/// `mean` (the σ → 0 limit).
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl Anchor {
    fn is_pinned(&self) -> bool {
        self.var == 0.0
    }
}

/// The per-visit objective
/// `‖x − μ̃‖²/(2σ²) + ‖s₀ − r(f^(t)(x))‖²/(2ξ′ₜ²)`,
/// with the standard-normal prior `‖x‖²/2` in place of the anchor term when
/// no anchor is given.
pub struct StepObjective<'a, D: ?Sized> {
    schedule: &'a NoiseSchedule,
    denoiser: &'a D,
    obs: &'a Observation,
    t: usize,
    anchor: Option<&'a Anchor>,
    constraint_var: f64,
    substeps: usize,
}

/// Loss value with the `X₀` estimate it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub x0_hat: Vec<f64>,
}

impl<'a, D: Denoiser + ?Sized> StepObjective<'a, D> {
    pub fn new(
        schedule: &'a NoiseSchedule,
        denoiser: &'a D,
        obs: &'a Observation,
        t: usize,
        anchor: Option<&'a Anchor>,
        config: &CoPaintConfig,
    ) -> Result<Self> {
        schedule.check_step(t)?;
        check_len("observation vs denoiser", denoiser.dim(), obs.dim())?;
        if let Some(a) = anchor {
            check_len("anchor", denoiser.dim(), a.mean.len())?;
        }
        Ok(Self {
            schedule,
            denoiser,
            obs,
            t,
            anchor,
            constraint_var: xi_schedule(config, t),
            substeps: config.substeps.max(1),
        })
    }

    /// Overrides `ξ′ₜ²`; `f64::INFINITY` switches the constraint term off.
    pub fn with_constraint_variance(mut self, var: f64) -> Self {
        self.constraint_var = var;
        self
    }

    pub fn constraint_variance(&self) -> f64 {
        self.constraint_var
    }

    fn constraint_weight(&self) -> f64 {
        if self.obs.operator().output_dim() == 0 {
            0.0
        } else {
            1.0 / self.constraint_var
        }
    }

    fn path(&self) -> Result<DeterministicPath> {
        DeterministicPath::multistep(self.schedule, self.t, self.substeps)
    }

    fn anchor_term(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.anchor {
            None => (0.5 * norm_sq(x), x.to_vec()),
            Some(a) if a.is_pinned() => (0.0, alloc::vec![0.0; x.len()]),
            Some(a) => {
                let d: Vec<f64> = x.iter().zip(&a.mean).map(|(xi, mi)| (xi - mi) / a.var).collect();
                let val = 0.5 * x.iter().zip(&a.mean).map(|(xi, mi)| (xi - mi) * (xi - mi)).sum::<f64>() / a.var;
                (val, d)
            }
        }
    }

    fn estimate(&self, x: &[f64]) -> Result<(PathTape, Vec<f64>, f64)> {
        let tape = self.path()?.forward(self.schedule, self.denoiser, x)?;
        let resid = self.obs.residual(tape.value())?;
        let w = self.constraint_weight();
        let term = if w == 0.0 { 0.0 } else { 0.5 * w * norm_sq(&resid) };
        Ok((tape, resid, term))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        check_len("objective input", self.denoiser.dim(), x.len())?;
        let (tape, _, constraint) = self.estimate(x)?;
        let (anchor, _) = self.anchor_term(x);
        Ok(Evaluation {
            loss: anchor + constraint,
            x0_hat: tape.into_value(),
        })
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.loss)
    }

    /// `(x − μ̃)/σ² + Jᵀ r†(r(f(x)) − s₀)/ξ′²`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("objective input", self.denoiser.dim(), x.len())?;
        let (_, mut g) = self.anchor_term(x);
        let w = self.constraint_weight();
        if w != 0.0 {
            let path = self.path()?;
            let tape = path.forward(self.schedule, self.denoiser, x)?;
            let resid = self.obs.residual(tape.value())?;
            let cot: Vec<f64> = self.obs.operator().adjoint(&resid)?.into_iter().map(|v| w * v).collect();
            let pulled = path.pullback(self.schedule, self.denoiser, &tape, &cot)?;
            axpy(1.0, &pulled, &mut g);
        }
        Ok(g)
    }
}

pub fn step_loss<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    x: &[f64],
    t: usize,
    anchor: Option<&Anchor>,
    config: &CoPaintConfig,
) -> Result<f64> {
    StepObjective::new(schedule, denoiser, obs, t, anchor, config)?.loss(x)
}

pub fn step_grad<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    x: &[f64],
    t: usize,
    anchor: Option<&Anchor>,
    config: &CoPaintConfig,
) -> Result<Vec<f64>> {
    StepObjective::new(schedule, denoiser, obs, t, anchor, config)?.grad(x)
}

/// `G` plain gradient-descent updates `x ← x − ηₜ ∇L`.
pub fn optimize_step<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    x_init: &[f64],
    t: usize,
    anchor: Option<&Anchor>,
    config: &CoPaintConfig,
) -> Result<Vec<f64>> {
    let objective = StepObjective::new(schedule, denoiser, obs, t, anchor, config)?;
    descend(&objective, x_init, learning_rate(config, schedule, t), config.grad_steps)
}

fn descend<D: Denoiser + ?Sized>(objective: &StepObjective<'_, D>, x_init: &[f64], eta: f64, iters: usize) -> Result<Vec<f64>> {
    if iters == 0 {
        return Ok(x_init.to_vec());
    }
    let mut x = match objective.anchor {
        Some(a) if a.is_pinned() => a.mean.clone(),
        _ => x_init.to_vec(),
    };
    for _ in 0..iters {
        let g = objective.grad(&x)?;
        if !all_finite(&g) {
            return Err(Error::NonFinite {
                what: "gradient",
                t: objective.t,
            });
        }
        axpy(-eta, &g, &mut x);
        if !all_finite(&x) {
            return Err(Error::NonFinite {
                what: "state",
                t: objective.t,
            });
        }
    }
    Ok(x)
}

/// One move of the reverse process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Visit step `t` and denoise to `t − 1`.
    Denoise(usize),
    /// Re-noise the state at `from` to step `to = from + τ`.
    Rewind { from: usize, to: usize },
}

/// Visit order of the time-travel loop: denoise from `T` towards 0; every
/// time `t` reaches a multiple of `τ` with `t + τ ≤ T`, rewind to `t + τ`
/// until `K` rewinds have been spent on that window, then move on.
pub fn itinerary(steps: usize, interval: usize, count: usize) -> Vec<Move> {
    let mut moves = Vec::with_capacity(steps * (count + 1) + steps / interval.max(1) * count);
    let mut t = steps;
    let mut k = count;
    while t != 0 {
        moves.push(Move::Denoise(t));
        t -= 1;
        if interval > 0 && t.is_multiple_of(interval) && t + interval <= steps {
            if k > 0 {
                moves.push(Move::Rewind { from: t, to: t + interval });
                t += interval;
                k -= 1;
            } else {
                k = count;
            }
        }
    }
    moves
}

/// One optimized visit.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitEntry {
    pub t: usize,
    pub loss_pre: Option<f64>,
    pub loss_post: Option<f64>,
    /// `‖s₀ − r(X̂₀)‖` for the estimate at this visit.
    pub residual: f64,
    /// Anchor `μ̃ₜ` produced by this visit's reverse step.
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    /// Entries in visit order, revisits included.
    pub entries: Vec<VisitEntry>,
    pub final_state: Vec<f64>,
    /// Wall-clock time, filled in by callers that can measure it.
    pub duration: Option<Duration>,
}

impl RunRecord {
    pub fn visited_steps(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.t).collect()
    }
}

pub(crate) fn check_run_inputs<D: Denoiser + ?Sized>(schedule: &NoiseSchedule, denoiser: &D, obs: &Observation) -> Result<()> {
    check_len("observation vs denoiser", denoiser.dim(), obs.dim())?;
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule("empty schedule".into()));
    }
    Ok(())
}

/// Runs CoPaint (with time travel when `travel_count > 0`).
///
/// Draws `X̃_T ~ N(0, I)`, then follows [`itinerary`]: each visit optimizes
/// the current state for `G` steps and takes a DDIM step whose mean becomes
/// the next visit's anchor; a rewind re-noises through the forward kernel and
/// anchors the rewound state at that kernel's mean and variance.
pub fn copaint_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    config: &CoPaintConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    check_run_inputs(schedule, denoiser, obs)?;
    config.validate(schedule)?;
    let t_max = schedule.len();
    let mut x = normal_vec(rng, denoiser.dim());
    let mut anchor: Option<Anchor> = None;
    let mut record = RunRecord::default();

    for mv in itinerary(t_max, config.travel_interval, config.travel_count) {
        match mv {
            Move::Denoise(t) => {
                let objective = StepObjective::new(schedule, denoiser, obs, t, anchor.as_ref(), config)?;
                let pre = objective.loss(&x)?;
                x = descend(&objective, &x, learning_rate(config, schedule, t), config.grad_steps)?;
                let post = objective.evaluate(&x)?;
                if !post.loss.is_finite() {
                    return Err(Error::NonFinite { what: "loss", t });
                }
                let residual = norm(&obs.residual(&post.x0_hat)?);
                let step = ddim_step(schedule, denoiser, &x, t, rng)?;
                record.entries.push(VisitEntry {
                    t,
                    loss_pre: Some(pre),
                    loss_post: Some(post.loss),
                    residual,
                    anchor: step.mu_tilde.clone(),
                });
                let s = schedule.sigma(t);
                anchor = Some(Anchor {
                    mean: step.mu_tilde,
                    var: s * s,
                });
                x = step.x_prev;
            }
            Move::Rewind { from, to } => {
                let (mean, var) = time_travel_moments(schedule, &x, from, to - from)?;
                x = time_travel(schedule, &x, from, to - from, rng)?;
                anchor = (to < t_max).then_some(Anchor { mean, var });
            }
        }
    }
    if config.projects_final(obs) {
        x = obs.operator().project(&x, obs.s0())?;
    }
    if !all_finite(&x) {
        return Err(Error::NonFinite { what: "final state", t: 0 });
    }
    record.final_state = x.clone();
    Ok((x, record))
}

/// Settings for the full-rollout optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeConfig {
    /// Total gradient steps on `X̃_T`.
    pub iterations: usize,
    /// Standard deviation `ξ_T` of the constraint term.
    pub xi: f64,
    pub learning_rate: f64,
    /// Largest schedule the optimizer accepts; every gradient back-propagates
    /// through all steps.
    pub max_steps: usize,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            xi: 1e-3,
            learning_rate: 5e-7,
            max_steps: 100,
        }
    }
}

/// Gradient descent on `‖X̃_T‖²/2 + ‖s₀ − r(g(X̃_T))‖²/(2ξ_T²)` where `g` is
/// the deterministic rollout, followed by that rollout.
pub fn prototype_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    config: &PrototypeConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    check_run_inputs(schedule, denoiser, obs)?;
    let t_max = schedule.len();
    if t_max > config.max_steps {
        return Err(Error::InvalidConfig(format!(
            "prototype optimizer limited to {} steps, schedule has {t_max}",
            config.max_steps
        )));
    }
    if config.xi.is_nan() || config.xi <= 0.0 {
        return Err(Error::InvalidConfig("xi must be positive".into()));
    }
    let x = normal_vec(rng, denoiser.dim());
    prototype_from(schedule, denoiser, obs, config, x)
}

/// [`prototype_run`] from a given starting `X̃_T`.
pub fn prototype_from<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    config: &PrototypeConfig,
    mut x: Vec<f64>,
) -> Result<(Vec<f64>, RunRecord)> {
    let t_max = schedule.len();
    check_len("prototype start", denoiser.dim(), x.len())?;
    let path = DeterministicPath::full(schedule, t_max)?;
    let weight = if obs.operator().output_dim() == 0 {
        0.0
    } else {
        1.0 / (config.xi * config.xi)
    };
    let loss_of = |x: &[f64], tape: &PathTape| -> Result<(f64, Vec<f64>)> {
        let resid = obs.residual(tape.value())?;
        Ok((0.5 * norm_sq(x) + 0.5 * weight * norm_sq(&resid), resid))
    };
    let mut record = RunRecord::default();
    for _ in 0..config.iterations {
        let tape = path.forward(schedule, denoiser, &x)?;
        let (pre, resid) = loss_of(&x, &tape)?;
        let mut g = x.clone();
        if weight != 0.0 {
            let cot: Vec<f64> = obs.operator().adjoint(&resid)?.into_iter().map(|v| weight * v).collect();
            axpy(1.0, &path.pullback(schedule, denoiser, &tape, &cot)?, &mut g);
        }
        axpy(-config.learning_rate, &g, &mut x);
        if !all_finite(&x) {
            return Err(Error::NonFinite { what: "state", t: t_max });
        }
        let tape = path.forward(schedule, denoiser, &x)?;
        let (post, resid) = loss_of(&x, &tape)?;
        record.entries.push(VisitEntry {
            t: t_max,
            loss_pre: Some(pre),
            loss_post: Some(post),
            residual: norm(&resid),
            anchor: Vec::new(),
        });
    }
    let x0 = path.value(schedule, denoiser, &x)?;
    record.final_state = x0.clone();
    Ok((x0, record))
}
