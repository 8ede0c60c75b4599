use std::path::Path;

use copaint_core::metrics::gap_trajectory;
use copaint_core::rng::stream;
use copaint_core::schedule::ScheduleSpec;

use super::{begin, csv_bytes, manifest_header, prepare_out, seed, write_manifest};
use crate::error::{CliError, Result};
use crate::formats::{encode_pgm, write_atomic};
use crate::methods::describe_schedule;
use crate::model::LoadedModel;
use crate::settings::Settings;

pub const GAP_KEYS: [&str; 7] = ["beta_end", "beta_start", "model", "runs", "seed", "steps", "train_steps"];

pub const GAP_HEADER: [&str; 2] = ["t", "gap"];

const PLOT_HEIGHT: usize = 64;

/// A black-on-white line plot with one column per step, `t = T` on the
/// left, scaled so the largest gap touches the top row.
pub fn plot(curve: &[(usize, f64)]) -> (usize, usize, Vec<f64>) {
    let width = curve.len().max(1);
    let top = curve.iter().map(|&(_, g)| g).fold(0.0, f64::max);
    let row = |g: f64| {
        if top > 0.0 && g.is_finite() {
            ((1.0 - g / top) * (PLOT_HEIGHT - 1) as f64).round() as usize
        } else {
            PLOT_HEIGHT - 1
        }
    };
    let mut pixels = vec![1.0; width * PLOT_HEIGHT];
    let mut prev: Option<usize> = None;
    for (col, &(_, g)) in curve.iter().enumerate() {
        let r = row(g);
        let (lo, hi) = prev.map_or((r, r), |p| (p.min(r), p.max(r)));
        for y in lo..=hi {
            pixels[y * width + col] = -1.0;
        }
        prev = Some(r);
    }
    (width, PLOT_HEIGHT, pixels)
}

/// Averages the one-step gap `‖f(X̃ₜ) − X̃₀‖/√N` over unconditional
/// deterministic trajectories and writes it as CSV and as a plot.
pub fn gap_plot(settings: &Settings, out: &Path) -> Result<String> {
    let (inputs, expected) = begin(settings, "gap-plot", &GAP_KEYS, false)?;
    let seed = seed(&inputs)?;
    let model_spec = inputs.required("model")?;
    let model = LoadedModel::load(model_spec)?;
    let runs: usize = inputs.parsed_or("runs", 32)?;
    if runs == 0 {
        return Err(CliError::usage("runs must be at least 1"));
    }
    let train_steps = inputs.parsed_or("train_steps", model.train_steps())?;
    if train_steps != model.train_steps() {
        return Err(CliError::usage(format!(
            "train_steps = {train_steps} does not match the model's {}",
            model.train_steps()
        )));
    }
    let steps: usize = inputs.parsed_or("steps", 250.min(train_steps))?;
    if steps == 0 || steps > train_steps {
        return Err(CliError::usage(format!("steps must be in 1..={train_steps}, got {steps}")));
    }
    let mut spec = ScheduleSpec::linear(train_steps, 0.0).with_sampling_steps(steps);
    spec.beta_start = inputs.parsed_or("beta_start", spec.beta_start)?;
    spec.beta_end = inputs.parsed_or("beta_end", spec.beta_end)?;

    let mut manifest = manifest_header("gap-plot", seed);
    manifest.set("model", model_spec);
    manifest.set("model_id", &model.id);
    manifest.set("runs", runs);
    manifest.set("steps", steps);
    manifest.set("dim", model.dim());
    describe_schedule(&spec, &mut manifest);
    expected.check_against(&manifest)?;

    let schedule = spec.build()?;
    let curve = gap_trajectory(&schedule, &model.model, runs, &mut stream(seed, 0))?;
    let csv = csv_bytes(&GAP_HEADER, curve.iter().map(|(t, g)| [t.to_string(), g.to_string()]))?;
    let (w, h, pixels) = plot(&curve);

    prepare_out(out)?;
    write_atomic(&out.join("gap.csv"), &csv)?;
    write_atomic(&out.join("gap.pgm"), &encode_pgm(w, h, &pixels))?;
    write_manifest(out, &manifest)?;

    let gap_at = |t: usize| curve.iter().find(|&&(s, _)| s == t).map(|&(_, g)| g);
    let mut msg = format!("gap(T={steps}) = {:.4e}", gap_at(steps).unwrap_or(f64::NAN));
    if steps >= 2 {
        let g2 = gap_at(2).unwrap_or(f64::NAN);
        msg.push_str(&format!(", gap(2) = {g2:.4e}, ratio = {:.1}", gap_at(steps).unwrap_or(f64::NAN) / g2));
    }
    msg.push_str(&format!(", gap(1) = {:.1e}", gap_at(1).unwrap_or(f64::NAN)));
    msg.push_str(&format!("\nwrote gap.csv, gap.pgm, manifest.txt to {}", out.display()));
    Ok(msg)
}
