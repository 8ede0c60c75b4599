use std::path::Path;

use copaint_core::data::{mirror_dataset, sample_clamped};
use copaint_core::metrics::MetricReport;
use copaint_core::rng::stream;
use copaint_core::{Geometry, NoiseSchedule, Observation};
use rayon::prelude::*;

use super::{begin, csv_bytes, fmt_opt, manifest_header, prepare_out, resolve_mask, seed, write_manifest};
use crate::error::{CliError, Result};
use crate::formats::write_atomic;
use crate::methods::{Method, Resolved, SAMPLER_KEYS};
use crate::model::{LoadedModel, Model};
use crate::settings::Settings;

pub const COMPARE_KEYS: [&str; 6] = ["masks", "methods", "model", "reference", "seed", "seeds"];

pub const RUNS_HEADER: [&str; 6] = [
    "method",
    "mask",
    "seed_index",
    "constraint_mean_abs",
    "constraint_max_abs",
    "coherence_error",
];
pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "mask",
    "runs",
    "median_constraint_mean_abs",
    "median_constraint_max_abs",
    "median_coherence_error",
];
pub const WINS_HEADER: [&str; 5] = ["mask", "method_a", "method_b", "metric", "win_rate"];

/// Offset separating reference streams from sampler streams.
const REFERENCE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reference {
    /// Draws from the Gaussian model itself, clamped to `[-1, 1]`.
    World,
    /// The mirror training distribution.
    Mirror,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fraction of paired runs in which `a` scores strictly lower than `b`,
/// ties counting one half.
fn win_rate(a: &[f64], b: &[f64]) -> f64 {
    let score: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 0.0,
        })
        .sum();
    score / a.len() as f64
}

/// Runs every method on every mask over the same seeded references and
/// writes per-run metrics, medians and pairwise win rates.
pub fn compare(settings: &Settings, out: &Path) -> Result<String> {
    let (inputs, expected) = begin(settings, "compare", &COMPARE_KEYS, true)?;
    let seed = seed(&inputs)?;
    let model_spec = inputs.required("model")?;
    let model = LoadedModel::load(model_spec)?;
    let dim = model.dim();
    let geometry = Geometry::Line(dim);

    let method_names = inputs
        .list("methods")?
        .ok_or_else(|| CliError::usage("compare needs at least one method"))?;
    let methods = method_names.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
    let masks = inputs.list("masks")?.unwrap_or_else(|| vec!["half".to_string()]);
    let n_seeds: usize = inputs.parsed_or("seeds", 32)?;
    if n_seeds == 0 {
        return Err(CliError::usage("seeds must be at least 1"));
    }
    let default_reference = if matches!(model.model, Model::Gaussian(_)) { "world" } else { "mirror" };
    let reference_name = inputs.get("reference").unwrap_or(default_reference);
    let reference = match reference_name {
        "world" => Reference::World,
        "mirror" => Reference::Mirror,
        other => return Err(CliError::usage(format!("reference must be world or mirror, got '{other}'"))),
    };
    let world = match (&model.model, reference) {
        (Model::Gaussian(w), Reference::World) => Some(w),
        (_, Reference::World) => return Err(CliError::usage("reference = world needs a Gaussian model")),
        _ => None,
    };

    let resolved = methods
        .iter()
        .map(|&m| Resolved::new(m, &inputs, model.train_steps(), seed))
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = manifest_header("compare", seed);
    manifest.set("model", model_spec);
    manifest.set("model_id", &model.id);
    manifest.set("methods", method_names.join(","));
    manifest.set("masks", masks.join(","));
    manifest.set("seeds", n_seeds);
    manifest.set("reference", reference_name);
    manifest.set("dim", dim);
    for key in SAMPLER_KEYS {
        if let Some(v) = inputs.get(key) {
            manifest.set(key, v);
        }
    }
    let summary: Vec<String> = resolved.iter().map(Resolved::compact).collect();
    manifest.set("methods.resolved", summary.join("; "));
    expected.check_against(&manifest)?;

    let schedules = resolved
        .iter()
        .map(Resolved::build_schedule)
        .collect::<Result<Vec<NoiseSchedule>>>()?;
    let references: Vec<Vec<f64>> = (0..n_seeds)
        .map(|i| {
            let mut rng = stream(seed, REFERENCE_STREAM + i as u64);
            match world {
                Some(w) => sample_clamped(w, 1.0, 1, &mut rng).remove(0),
                None => mirror_dataset(dim, 1, &mut rng).remove(0),
            }
        })
        .collect();
    let observations = masks
        .iter()
        .map(|mask| {
            references
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let op = resolve_mask(mask, geometry, seed.wrapping_add(i as u64))?;
                    Ok(Observation::from_reference(op, r)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mirror = dim % 2 == 0;
    let jobs: Vec<(usize, usize, usize)> = (0..masks.len())
        .flat_map(|k| (0..methods.len()).flat_map(move |m| (0..n_seeds).map(move |i| (k, m, i))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(k, m, i)| {
            let obs = &observations[k][i];
            let mut rng = stream(seed, i as u64);
            let (x0, _) = methods[m].run(&schedules[m], &model.model, obs, &resolved[m].config, &mut rng)?;
            Ok(MetricReport::new(obs, &x0, mirror)?)
        })
        .collect::<Vec<Result<MetricReport>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let report = |k: usize, m: usize, i: usize| &reports[(k * methods.len() + m) * n_seeds + i];
    let runs_rows = jobs.iter().map(|&(k, m, i)| {
        let r = report(k, m, i);
        [
            methods[m].to_string(),
            masks[k].clone(),
            i.to_string(),
            r.constraint_mean_abs.to_string(),
            r.constraint_max_abs.to_string(),
            fmt_opt(r.coherence_error),
        ]
    });
    let runs_csv = csv_bytes(&RUNS_HEADER, runs_rows)?;

    // Coherence decides wins on mirror data, constraint error elsewhere.
    let metric_name = if mirror { "coherence_error" } else { "constraint_mean_abs" };
    let score = |r: &MetricReport| r.coherence_error.unwrap_or(r.constraint_mean_abs);
    let mut summary_rows = Vec::new();
    let mut wins_rows = Vec::new();
    let mut message = format!("{n_seeds} paired seeds, lower {metric_name} wins\n");
    for (k, mask) in masks.iter().enumerate() {
        let scores: Vec<Vec<f64>> = (0..methods.len())
            .map(|m| (0..n_seeds).map(|i| score(report(k, m, i))).collect())
            .collect();
        for (m, method) in methods.iter().enumerate() {
            let column = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> Option<f64> {
                let mut v: Vec<f64> = (0..n_seeds).filter_map(|i| f(report(k, m, i))).collect();
                (!v.is_empty()).then(|| median(&mut v))
            };
            let med_mean = column(&|r| Some(r.constraint_mean_abs));
            let med_max = column(&|r| Some(r.constraint_max_abs));
            let med_coh = column(&|r| r.coherence_error);
            summary_rows.push([
                method.to_string(),
                mask.clone(),
                n_seeds.to_string(),
                fmt_opt(med_mean),
                fmt_opt(med_max),
                fmt_opt(med_coh),
            ]);
            message.push_str(&format!(
                "{mask:>8} {:<13} median constraint_mean_abs = {:.3e}",
                method.name(),
                med_mean.unwrap_or(f64::NAN)
            ));
            if let Some(c) = med_coh {
                message.push_str(&format!(", median coherence_error = {c:.4}"));
            }
            message.push('\n');
            for (b, other) in methods.iter().enumerate() {
                wins_rows.push([
                    mask.clone(),
                    method.to_string(),
                    other.to_string(),
                    metric_name.to_string(),
                    win_rate(&scores[m], &scores[b]).to_string(),
                ]);
            }
        }
    }

    prepare_out(out)?;
    write_atomic(&out.join("runs.csv"), &runs_csv)?;
    write_atomic(&out.join("summary.csv"), &csv_bytes(&SUMMARY_HEADER, summary_rows)?)?;
    write_atomic(&out.join("wins.csv"), &csv_bytes(&WINS_HEADER, wins_rows)?)?;
    write_manifest(out, &manifest)?;
    message.push_str(&format!("wrote runs.csv, summary.csv, wins.csv, manifest.txt to {}", out.display()));
    Ok(message)
}
