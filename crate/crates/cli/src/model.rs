//! Loading denoisers named on the command line.

use std::path::Path;

use copaint_core::{Denoiser, GaussianWorld, MlpDenoiser, NoiseSchedule};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::formats::{decode_checkpoint, decode_gaussian, read_bytes};

/// Training length assumed for Gaussian worlds, which have no checkpoint
/// to carry one.
pub const DEFAULT_TRAIN_STEPS: usize = 1000;

pub fn sha256_id(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub enum Model {
    Mlp(MlpDenoiser),
    Gaussian(GaussianWorld),
}

impl Denoiser for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Mlp(m) => m.dim(),
            Model::Gaussian(g) => g.dim(),
        }
    }

    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> copaint_core::Result<Vec<f64>> {
        match self {
            Model::Mlp(m) => m.value(schedule, x, t),
            Model::Gaussian(g) => g.value(schedule, x, t),
        }
    }

    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> copaint_core::Result<Vec<f64>> {
        match self {
            Model::Mlp(m) => m.vjp(schedule, x, t, v),
            Model::Gaussian(g) => g.vjp(schedule, x, t, v),
        }
    }

    fn value_and_vjp(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        v: &[f64],
    ) -> copaint_core::Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Model::Mlp(m) => m.value_and_vjp(schedule, x, t, v),
            Model::Gaussian(g) => g.value_and_vjp(schedule, x, t, v),
        }
    }
}

/// A model together with a stable identifier: the content hash of the
/// file it came from, or the shorthand itself.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: Model,
    pub id: String,
}

impl LoadedModel {
    /// Accepts a checkpoint path, `gaussian:<spec file>`, or
    /// `gaussian:mirror:<N>:<rho>`.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(rest) = spec.strip_prefix("gaussian:") {
            if let Some(params) = rest.strip_prefix("mirror:") {
                let (n, rho) = params
                    .split_once(':')
                    .and_then(|(n, rho)| Some((n.parse::<usize>().ok()?, rho.parse::<f64>().ok()?)))
                    .ok_or_else(|| CliError::usage(format!("expected gaussian:mirror:<N>:<rho>, got '{spec}'")))?;
                if n == 0 || !rho.is_finite() || rho.abs() >= 1.0 {
                    return Err(CliError::usage("mirror world needs N >= 1 and |rho| < 1"));
                }
                return Ok(Self {
                    model: Model::Gaussian(GaussianWorld::mirror(n, rho)?),
                    id: spec.to_string(),
                });
            }
            let path = Path::new(rest);
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::format(path, "not valid UTF-8"))?;
            return Ok(Self {
                model: Model::Gaussian(decode_gaussian(&text, path)?),
                id: sha256_id(&bytes),
            });
        }
        let path = Path::new(spec);
        let bytes = read_bytes(path)?;
        Ok(Self {
            model: Model::Mlp(decode_checkpoint(&bytes, path)?),
            id: sha256_id(&bytes),
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// The training length a schedule must use with this model.
    pub fn train_steps(&self) -> usize {
        match &self.model {
            Model::Mlp(m) => m.layout().steps(),
            Model::Gaussian(_) => DEFAULT_TRAIN_STEPS,
        }
    }
}
