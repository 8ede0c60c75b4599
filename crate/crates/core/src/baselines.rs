//! Reference samplers that enforce the observation by replacement or
//! projection instead of optimization.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::conditioning::Observation;
use crate::copaint::{check_run_inputs, itinerary, CoPaintConfig, Move, RunRecord, VisitEntry};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};
use crate::rng::{normal_vec, standard_normal};
use crate::sampler::{ddim_step, ddim_update, time_travel, DdimStepResult};
use crate::schedule::NoiseSchedule;

/// Overwrites revealed coordinates of `x_{t−1}` with a forward-noised copy
/// of the observation; `t − 1 = 0` writes `s₀` exactly.
fn replace_revealed<R: Rng + ?Sized>(schedule: &NoiseSchedule, x: &mut [f64], t_prev: usize, mask: &[bool], s0: &[f64], rng: &mut R) {
    let (s, c) = if t_prev == 0 {
        (1.0, 0.0)
    } else {
        let ab = schedule.alpha_bar(t_prev);
        (ab.sqrt(), (1.0 - ab).sqrt())
    };
    let revealed = x.iter_mut().zip(mask).filter(|(_, &m)| m).map(|(xi, _)| xi);
    for (xi, &v) in revealed.zip(s0) {
        *xi = if c == 0.0 { v } else { s * v + c * standard_normal(rng) };
    }
}

fn pixel_mask(obs: &Observation) -> Result<&[bool]> {
    obs.operator()
        .mask()
        .ok_or(Error::Unsupported("replacement samplers need a pixel mask"))
}

fn entry(obs: &Observation, t: usize, step: &DdimStepResult) -> Result<VisitEntry> {
    Ok(VisitEntry {
        t,
        loss_pre: None,
        loss_post: None,
        residual: norm(&obs.residual(&step.x0_hat)?),
        anchor: step.mu_tilde.clone(),
    })
}

fn finish(x: Vec<f64>, mut record: RunRecord) -> Result<(Vec<f64>, RunRecord)> {
    if !all_finite(&x) {
        return Err(Error::NonFinite { what: "final state", t: 0 });
    }
    record.final_state = x.clone();
    Ok((x, record))
}

fn replacement_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    interval: usize,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    check_run_inputs(schedule, denoiser, obs)?;
    let mask = pixel_mask(obs)?;
    let mut x = normal_vec(rng, denoiser.dim());
    let mut record = RunRecord::default();
    for mv in itinerary(schedule.len(), interval, count) {
        match mv {
            Move::Denoise(t) => {
                let step = ddim_step(schedule, denoiser, &x, t, rng)?;
                record.entries.push(entry(obs, t, &step)?);
                x = step.x_prev;
                replace_revealed(schedule, &mut x, t - 1, mask, obs.s0(), rng);
            }
            Move::Rewind { from, to } => x = time_travel(schedule, &x, from, to - from, rng)?,
        }
    }
    finish(x, record)
}

/// Plain DDIM whose revealed coordinates are overwritten after every step.
pub fn blended_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    replacement_run(schedule, denoiser, obs, 1, 0, rng)
}

/// Replacement sampling inside CoPaint's time-travel loop (the config's
/// `τ` and `K`), without any optimization.
pub fn repaint_lite_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    config: &CoPaintConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    if config.travel_interval == 0 {
        return Err(Error::InvalidConfig("time-travel interval must be at least 1".into()));
    }
    replacement_run(schedule, denoiser, obs, config.travel_interval, config.travel_count, rng)
}

/// Projects every estimate of `X₀` onto the constraint set,
/// `X̂₀ + r†(s₀ − r(X̂₀))`, before the DDIM update.
pub fn ddnm_run<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    obs: &Observation,
    rng: &mut R,
) -> Result<(Vec<f64>, RunRecord)> {
    check_run_inputs(schedule, denoiser, obs)?;
    let mut x = normal_vec(rng, denoiser.dim());
    let mut record = RunRecord::default();
    for t in (1..=schedule.len()).rev() {
        let x0 = denoiser.value(schedule, &x, t)?;
        let projected = obs.operator().project(&x0, obs.s0())?;
        let step = ddim_update(schedule, &x, t, projected, rng)?;
        record.entries.push(VisitEntry {
            t,
            loss_pre: None,
            loss_post: None,
            residual: norm(&obs.residual(&x0)?),
            anchor: step.mu_tilde.clone(),
        });
        x = step.x_prev;
    }
    finish(x, record)
}
