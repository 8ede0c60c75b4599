//! On-disk formats: MLP checkpoints, Gaussian world specs, masks, vectors
//! and 8-bit PGM images.

use std::fs;
use std::io::Write;
use std::path::Path;

use copaint_core::denoiser::MlpLayout;
use copaint_core::linalg::Matrix;
use copaint_core::{GaussianWorld, MlpDenoiser};

use crate::error::{CliError, Result};

const CHECKPOINT_MAGIC: &[u8] = b"CPMLP1\n";

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| CliError::format(path, "not valid UTF-8"))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    file.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn encode_checkpoint(model: &MlpDenoiser) -> Vec<u8> {
    let layout = model.layout();
    let dims: Vec<String> = layout.dims().iter().map(usize::to_string).collect();
    let mut out = Vec::with_capacity(64 + 8 * model.params().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(format!("dims {}\nT {}\n", dims.join(" "), layout.steps()).as_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n')?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).ok()
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<MlpDenoiser> {
    let bad = |msg: &str| CliError::format(path, format!("checkpoint: {msg}"));
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err(bad("missing CPMLP1 header"));
    }
    let mut pos = CHECKPOINT_MAGIC.len();
    let dims_line = take_line(bytes, &mut pos).ok_or_else(|| bad("missing dims line"))?;
    let dims = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| bad("expected 'dims ...'"))?
        .split(' ')
        .map(str::parse)
        .collect::<Result<Vec<usize>, _>>()
        .map_err(|_| bad("bad layer width"))?;
    let steps_line = take_line(bytes, &mut pos).ok_or_else(|| bad("missing T line"))?;
    let steps: usize = steps_line
        .strip_prefix("T ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("expected 'T <int>'"))?;
    let layout = MlpLayout::new(dims, steps)?;
    let body = &bytes[pos..];
    if body.len() != 8 * layout.param_count() {
        return Err(bad(&format!(
            "expected {} parameters, found {} bytes",
            layout.param_count(),
            body.len()
        )));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(MlpDenoiser::from_params(layout, params)?)
}

pub fn read_checkpoint(path: &Path) -> Result<MlpDenoiser> {
    decode_checkpoint(&read_bytes(path)?, path)
}

fn float_line(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn encode_gaussian(world: &GaussianWorld) -> String {
    let n = world.mean().len();
    let mut out = format!("gaussian {n}\n{}\n", float_line(world.mean()));
    for i in 0..n {
        out.push_str(&float_line(world.cov().row(i)));
        out.push('\n');
    }
    out
}

fn parse_floats(line: &str, path: &Path, what: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CliError::format(path, format!("{what}: bad number '{tok}'")))
        })
        .collect()
}

fn header_count(line: Option<&str>, keyword: &str, path: &Path) -> Result<usize> {
    line.and_then(|l| l.trim_end().strip_prefix(keyword))
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| CliError::format(path, format!("expected header '{keyword} N'")))
}

pub fn decode_gaussian(text: &str, path: &Path) -> Result<GaussianWorld> {
    let mut lines = text.lines();
    let n = header_count(lines.next(), "gaussian", path)?;
    let mean = parse_floats(lines.next().unwrap_or(""), path, "mean")?;
    if mean.len() != n {
        return Err(CliError::format(path, format!("mean has {} entries, expected {n}", mean.len())));
    }
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = parse_floats(lines.next().unwrap_or(""), path, "covariance")?;
        if row.len() != n {
            return Err(CliError::format(path, format!("covariance row {i} has {} entries", row.len())));
        }
        data.extend(row);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(CliError::format(path, "trailing content after covariance"));
    }
    Ok(GaussianWorld::new(mean, Matrix::from_row_major(n, n, data)?)?)
}

pub fn read_gaussian(path: &Path) -> Result<GaussianWorld> {
    decode_gaussian(&read_text(path)?, path)
}

pub fn encode_mask(mask: &[bool]) -> String {
    let bits: String = mask.iter().map(|&b| if b { '1' } else { '0' }).collect();
    format!("mask {}\n{bits}\n", mask.len())
}

pub fn decode_mask(text: &str, path: &Path) -> Result<Vec<bool>> {
    let mut lines = text.lines();
    let n = header_count(lines.next(), "mask", path)?;
    let bits = lines.next().unwrap_or("").trim_end();
    let mask = bits
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(CliError::format(path, format!("mask: unexpected character '{other}'"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    if mask.len() != n {
        return Err(CliError::format(path, format!("mask has {} entries, expected {n}", mask.len())));
    }
    Ok(mask)
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    decode_mask(&read_text(path)?, path)
}

pub fn encode_vector(values: &[f64]) -> String {
    let mut out = format!("vec {}\n", values.len());
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn decode_vector(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    let n = header_count(lines.next(), "vec", path)?;
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| CliError::format(path, format!("vector: bad number '{}'", l.trim())))
        })
        .collect::<Result<_>>()?;
    if values.len() != n {
        return Err(CliError::format(path, format!("vector has {} entries, expected {n}", values.len())));
    }
    Ok(values)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    decode_vector(&read_text(path)?, path)
}

/// A grayscale image with pixels mapped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

pub fn pixel_to_value(p: u8) -> f64 {
    f64::from(p) / 127.5 - 1.0
}

pub fn value_to_pixel(x: f64) -> u8 {
    // NaN maps to mid-gray rather than panicking in the cast.
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    (x * 127.5 + 127.5).round() as u8
}

pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| value_to_pixel(v)));
    out
}

/// Parses a binary (P5) PGM with maxval 255; `#` comments are allowed in
/// the header.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let bad = |msg: &str| CliError::format(path, format!("pgm: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 images are supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(bad(&format!("expected {} pixels, found {}", width * height, raster.len())));
    }
    Ok(Image {
        width,
        height,
        pixels: raster.iter().map(|&p| pixel_to_value(p)).collect(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    decode_pgm(&read_bytes(path)?, path)
}
