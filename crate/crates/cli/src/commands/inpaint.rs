use std::path::Path;

use copaint_core::metrics::MetricReport;
use copaint_core::rng::stream;
use copaint_core::{Geometry, Observation, RunRecord};

use super::{begin, csv_bytes, describe_operator, fmt_opt, manifest_header, prepare_out, resolve_mask, seed, write_manifest};
use crate::error::{CliError, Result};
use crate::formats::{decode_pgm, decode_vector, encode_pgm, encode_vector, read_bytes, write_atomic};
use crate::methods::{Method, Resolved};
use crate::model::{sha256_id, LoadedModel};
use crate::settings::Settings;

pub const INPAINT_KEYS: [&str; 5] = ["input", "mask", "method", "model", "seed"];

pub const METRICS_HEADER: [&str; 4] = ["method", "constraint_mean_abs", "constraint_max_abs", "coherence_error"];
pub const RECORD_HEADER: [&str; 5] = ["visit_index", "t", "loss_pre", "loss_post", "residual"];

/// Reads a `.pgm` image as a grid or anything else as a vector file.
pub(super) fn load_input(path: &Path) -> Result<(Vec<f64>, Geometry, String)> {
    let bytes = read_bytes(path)?;
    let id = sha256_id(&bytes);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let img = decode_pgm(&bytes, path)?;
        let geometry = Geometry::Grid {
            height: img.height,
            width: img.width,
        };
        Ok((img.pixels, geometry, id))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "not valid UTF-8"))?;
        let values = decode_vector(&text, path)?;
        let n = values.len();
        Ok((values, Geometry::Line(n), id))
    }
}

/// Mirror coherence only makes sense for even-length vectors.
pub(super) fn is_mirror_geometry(geometry: Geometry) -> bool {
    matches!(geometry, Geometry::Line(n) if n % 2 == 0)
}

pub(super) fn record_csv(record: &RunRecord) -> Result<Vec<u8>> {
    csv_bytes(
        &RECORD_HEADER,
        record.entries.iter().enumerate().map(|(i, e)| {
            [
                i.to_string(),
                e.t.to_string(),
                fmt_opt(e.loss_pre),
                fmt_opt(e.loss_post),
                e.residual.to_string(),
            ]
        }),
    )
}

/// Runs one sampler on one input and writes the output, the per-visit
/// record, the metrics and the manifest into `out`.
pub fn inpaint(settings: &Settings, out: &Path) -> Result<String> {
    let (inputs, expected) = begin(settings, "inpaint", &INPAINT_KEYS, true)?;
    let seed = seed(&inputs)?;
    let model_spec = inputs.required("model")?;
    let model = LoadedModel::load(model_spec)?;
    let input_path = inputs.required("input")?;
    let (input, geometry, input_id) = load_input(Path::new(input_path))?;
    if input.len() != model.dim() {
        return Err(CliError::usage(format!(
            "input has {} values but the model expects {}",
            input.len(),
            model.dim()
        )));
    }
    let method: Method = inputs.get("method").unwrap_or("copaint-tt").parse()?;
    let resolved = Resolved::new(method, &inputs, model.train_steps(), seed)?;
    let mask_spec = inputs.required("mask")?;
    let operator = resolve_mask(mask_spec, geometry, seed)?;
    let obs = Observation::from_reference(operator, &input)?;

    let mut manifest = manifest_header("inpaint", seed);
    manifest.set("model", model_spec);
    manifest.set("model_id", &model.id);
    manifest.set("input", input_path);
    manifest.set("input_id", &input_id);
    manifest.set("mask", mask_spec);
    manifest.set("reveal", describe_operator(obs.operator()));
    manifest.set("dim", model.dim());
    resolved.describe(&mut manifest);
    expected.check_against(&manifest)?;

    let schedule = resolved.build_schedule()?;
    let mut rng = stream(seed, 0);
    let (x0, record) = method.run(&schedule, &model.model, &obs, &resolved.config, &mut rng)?;
    let report = MetricReport::new(&obs, &x0, is_mirror_geometry(geometry))?;

    prepare_out(out)?;
    let output_name = match geometry {
        Geometry::Grid { height, width } => {
            write_atomic(&out.join("output.pgm"), &encode_pgm(width, height, &x0))?;
            "output.pgm"
        }
        Geometry::Line(_) => {
            write_atomic(&out.join("output.vec"), encode_vector(&x0).as_bytes())?;
            "output.vec"
        }
    };
    write_atomic(&out.join("record.csv"), &record_csv(&record)?)?;
    let metrics = csv_bytes(
        &METRICS_HEADER,
        [[
            method.to_string(),
            report.constraint_mean_abs.to_string(),
            report.constraint_max_abs.to_string(),
            fmt_opt(report.coherence_error),
        ]],
    )?;
    write_atomic(&out.join("metrics.csv"), &metrics)?;
    write_manifest(out, &manifest)?;

    let mut msg = format!(
        "{method}: {} visits, constraint_mean_abs = {:.3e}, constraint_max_abs = {:.3e}",
        record.entries.len(),
        report.constraint_mean_abs,
        report.constraint_max_abs
    );
    if let Some(c) = report.coherence_error {
        msg.push_str(&format!(", coherence_error = {c:.4}"));
    }
    msg.push_str(&format!("\nwrote {output_name}, record.csv, metrics.csv, manifest.txt to {}", out.display()));
    Ok(msg)
}
