//! The subcommands. Each takes resolved [`Settings`] and an output
//! directory, writes its artifacts and a manifest, and returns a short
//! human-readable summary.

mod compare;
mod gap;
mod inpaint;
mod train;

use std::fs;
use std::path::Path;

use copaint_core::conditioning::{standard_mask, MASK_NAMES};
use copaint_core::{Geometry, RevealOperator};

use crate::error::{CliError, Result};
use crate::formats::{read_mask, write_atomic};
use crate::methods::SAMPLER_KEYS;
use crate::settings::Settings;

pub use compare::{compare, COMPARE_KEYS};
pub use gap::{gap_plot, GAP_KEYS};
pub use inpaint::{inpaint, INPAINT_KEYS};
pub use train::{train_toy, TRAIN_KEYS};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Splits `settings` into inputs and the derived entries a manifest
/// carried, and rejects keys `command` does not know. Sampling commands
/// also accept [`SAMPLER_KEYS`].
fn begin(settings: &Settings, command: &str, own: &[&str], sampling: bool) -> Result<(Settings, Settings)> {
    let mut inputs = settings.clone();
    let expected = inputs.take_derived();
    let mut allowed = own.to_vec();
    if sampling {
        allowed.extend(SAMPLER_KEYS);
    }
    inputs.check_keys(&allowed)?;
    if let Some(c) = expected.get("command") {
        if c != command {
            return Err(CliError::usage(format!("config was written by '{c}', not '{command}'")));
        }
    }
    Ok((inputs, expected))
}

fn seed(inputs: &Settings) -> Result<u64> {
    inputs.parsed_or("seed", 0)
}

/// Starts a manifest with the entries every command records.
fn manifest_header(command: &str, seed: u64) -> Settings {
    let mut m = Settings::new();
    m.set("command", command);
    m.set("version", crate::VERSION);
    m.set("seed", seed);
    m
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_manifest(out: &Path, manifest: &Settings) -> Result<()> {
    write_atomic(&out.join(MANIFEST_FILE), manifest.render().as_bytes())
}

/// Renders rows as CSV with a header and LF line endings.
fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| CliError::usage(format!("csv output: {}", e.error())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Resolves a mask setting: a standard mask name, `none`, `full`,
/// `pool:<factor>` or the path of a mask file.
fn resolve_mask(spec: &str, geometry: Geometry, seed: u64) -> Result<RevealOperator> {
    let n = geometry.len();
    if MASK_NAMES.contains(&spec) {
        return Ok(standard_mask(spec, geometry, seed)?);
    }
    match spec {
        "none" => return Ok(RevealOperator::from_mask(vec![false; n])),
        "full" => return Ok(RevealOperator::from_mask(vec![true; n])),
        _ => {}
    }
    if let Some(factor) = spec.strip_prefix("pool:") {
        let factor = factor
            .parse()
            .map_err(|_| CliError::usage(format!("bad pooling factor in '{spec}'")))?;
        return Ok(RevealOperator::avg_pool(geometry, factor)?);
    }
    let path = Path::new(spec);
    if !path.exists() {
        let mut names: Vec<&str> = MASK_NAMES.to_vec();
        names.extend(["none", "full", "pool:<k>"]);
        return Err(CliError::usage(format!(
            "mask '{spec}' is neither a file nor one of {}",
            names.join(", ")
        )));
    }
    let mask = read_mask(path)?;
    if mask.len() != n {
        return Err(CliError::usage(format!("mask has {} entries but the data has {n}", mask.len())));
    }
    Ok(RevealOperator::from_mask(mask))
}

/// Compact description of an operator for manifests.
fn describe_operator(op: &RevealOperator) -> String {
    match op {
        RevealOperator::Mask { mask, .. } => mask.iter().map(|&m| if m { '1' } else { '0' }).collect(),
        RevealOperator::AvgPool { factor, .. } => format!("pool:{factor}"),
    }
}
