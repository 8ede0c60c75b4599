use std::fs;
use std::path::Path;

use copaint_core::data::{mirror_dataset, sample_clamped};
use copaint_core::denoiser::{train_mlp, TrainConfig};
use copaint_core::rng::stream;
use copaint_core::schedule::ScheduleSpec;

use super::{begin, csv_bytes, manifest_header, prepare_out, seed, write_manifest};
use crate::error::{CliError, Result};
use crate::formats::{encode_checkpoint, read_bytes, read_pgm, write_atomic};
use crate::methods::describe_schedule;
use crate::model::{sha256_id, LoadedModel, Model, DEFAULT_TRAIN_STEPS};
use crate::settings::{join, Settings};

pub const TRAIN_KEYS: [&str; 13] = [
    "batch_size",
    "beta_end",
    "beta_start",
    "data",
    "dataset",
    "embed_dim",
    "epochs",
    "hidden",
    "learning_rate",
    "output",
    "samples",
    "seed",
    "train_steps",
];

pub const LOSS_HEADER: [&str; 2] = ["epoch", "loss"];

/// Stream for dataset draws; streams 0 and 1 belong to the trainer.
const DATA_STREAM: u64 = 2;

/// Every `.pgm` in `dir`, sorted by file name, as equally sized vectors.
fn load_image_dir(dir: &Path) -> Result<(Vec<Vec<f64>>, String)> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no .pgm images in {}", dir.display())));
    }
    let mut hashed = Vec::new();
    let mut data = Vec::with_capacity(paths.len());
    let mut shape = None;
    for path in &paths {
        let img = read_pgm(path)?;
        if *shape.get_or_insert((img.width, img.height)) != (img.width, img.height) {
            return Err(CliError::format(path, "image size differs from the first image"));
        }
        if let Some(name) = path.file_name() {
            hashed.extend_from_slice(name.as_encoded_bytes());
        }
        hashed.push(0);
        hashed.extend(read_bytes(path)?);
        data.push(img.pixels);
    }
    Ok((data, sha256_id(&hashed)))
}

/// Trains an epsilon-prediction MLP on a toy dataset and writes the
/// checkpoint, the per-epoch losses and a manifest.
pub fn train_toy(settings: &Settings, out: &Path) -> Result<String> {
    let (inputs, expected) = begin(settings, "train-toy", &TRAIN_KEYS, false)?;
    let seed = seed(&inputs)?;
    // `dim` is derived for image data but chosen by the caller otherwise,
    // so it arrives with the derived entries.
    let requested_dim: Option<usize> = expected.parsed("dim")?;
    let dataset = inputs.get("dataset").unwrap_or("mirror");
    let samples: usize = inputs.parsed_or("samples", 4096)?;
    let mut rng = stream(seed, DATA_STREAM);

    let (data, data_id) = match dataset {
        "mirror" => {
            let dim = requested_dim.unwrap_or(16);
            if dim == 0 || samples == 0 {
                return Err(CliError::usage("mirror data needs dim >= 1 and samples >= 1"));
            }
            (mirror_dataset(dim, samples, &mut rng), format!("mirror:{dim}:{samples}"))
        }
        "gaussian-sample" => {
            let spec = inputs.required("data")?;
            let loaded = LoadedModel::load(&format!("gaussian:{spec}"))?;
            let Model::Gaussian(world) = &loaded.model else {
                unreachable!("gaussian: prefix always loads a Gaussian world")
            };
            if samples == 0 {
                return Err(CliError::usage("samples must be at least 1"));
            }
            (sample_clamped(world, 1.0, samples, &mut rng), format!("{}:{samples}", loaded.id))
        }
        "image-dir" => load_image_dir(Path::new(inputs.required("data")?))?,
        other => {
            return Err(CliError::usage(format!(
                "dataset must be mirror, gaussian-sample or image-dir, got '{other}'"
            )))
        }
    };
    let dim = data[0].len();
    if requested_dim.is_some_and(|d| d != dim) {
        return Err(CliError::usage(format!("dim = {} does not match the data's {dim}", requested_dim.unwrap_or(0))));
    }

    let defaults = TrainConfig::default();
    let hidden = match inputs.list("hidden")? {
        None => defaults.hidden.clone(),
        Some(items) => items
            .iter()
            .map(|h| h.parse::<usize>().map_err(|_| CliError::usage(format!("invalid hidden width '{h}'"))))
            .collect::<Result<_>>()?,
    };
    let config = TrainConfig {
        hidden,
        embed_dim: inputs.parsed_or("embed_dim", defaults.embed_dim)?,
        epochs: inputs.parsed_or("epochs", defaults.epochs)?,
        batch_size: inputs.parsed_or("batch_size", defaults.batch_size)?,
        learning_rate: inputs.parsed_or("learning_rate", defaults.learning_rate)?,
        seed,
    };
    let mut spec = ScheduleSpec::linear(inputs.parsed_or("train_steps", DEFAULT_TRAIN_STEPS)?, 0.0);
    spec.beta_start = inputs.parsed_or("beta_start", spec.beta_start)?;
    spec.beta_end = inputs.parsed_or("beta_end", spec.beta_end)?;
    let output = inputs.get("output").unwrap_or("model.cpmlp");
    if output.is_empty() || Path::new(output).file_name().is_none_or(|n| n != output) {
        return Err(CliError::usage("output must be a plain file name inside the output directory"));
    }

    let mut manifest = manifest_header("train-toy", seed);
    manifest.set("dataset", dataset);
    if let Some(d) = inputs.get("data") {
        manifest.set("data", d);
    }
    manifest.set("data_id", &data_id);
    manifest.set("dim", dim);
    manifest.set("samples", samples);
    manifest.set("hidden", join(&config.hidden));
    manifest.set("embed_dim", config.embed_dim);
    manifest.set("epochs", config.epochs);
    manifest.set("batch_size", config.batch_size);
    manifest.set("learning_rate", config.learning_rate);
    manifest.set("output", output);
    describe_schedule(&spec, &mut manifest);

    let schedule = spec.build()?;
    let outcome = train_mlp(&data, &schedule, &config)?;
    let checkpoint = encode_checkpoint(&outcome.model);
    manifest.set("model_id", sha256_id(&checkpoint));
    expected.check_against(&manifest)?;

    let losses = csv_bytes(
        &LOSS_HEADER,
        outcome
            .epoch_losses
            .iter()
            .enumerate()
            .map(|(e, l)| [(e + 1).to_string(), l.to_string()]),
    )?;
    prepare_out(out)?;
    write_atomic(&out.join(output), &checkpoint)?;
    write_atomic(&out.join("losses.csv"), &losses)?;
    write_manifest(out, &manifest)?;
    Ok(format!(
        "final loss = {:.5} (zero model = {:.5}) after {} epochs on {} samples of dim {dim}\nwrote {output}, losses.csv, manifest.txt to {}",
        outcome.final_loss,
        outcome.zero_model_loss,
        config.epochs,
        data.len(),
        out.display()
    ))
}
