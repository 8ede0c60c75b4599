//! Sampler presets and the settings that tune them.

use std::fmt;
use std::str::FromStr;

use copaint_core::baselines::{blended_run, ddnm_run, repaint_lite_run};
use copaint_core::copaint::copaint_run;
use copaint_core::schedule::ScheduleSpec;
use copaint_core::rng::SamplerRng;
use copaint_core::{CoPaintConfig, Denoiser, NoiseSchedule, Observation, RunRecord};

use crate::error::{CliError, Result};
use crate::settings::{join, Settings};

/// Keys every sampling command accepts on top of its own.
pub const SAMPLER_KEYS: [&str; 12] = [
    "beta_end",
    "beta_start",
    "final_projection",
    "grad_steps",
    "learning_rate",
    "sigma_eta",
    "steps",
    "substeps",
    "tau",
    "train_steps",
    "travel_count",
    "xi_decay",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    CoPaint,
    CoPaintTt,
    CoPaintFast,
    Blended,
    Ddnm,
    RepaintLite,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::CoPaint,
        Method::CoPaintTt,
        Method::CoPaintFast,
        Method::Blended,
        Method::Ddnm,
        Method::RepaintLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CoPaint => "copaint",
            Method::CoPaintTt => "copaint-tt",
            Method::CoPaintFast => "copaint-fast",
            Method::Blended => "blended",
            Method::Ddnm => "ddnm",
            Method::RepaintLite => "repaint-lite",
        }
    }

    /// Starting configuration before any setting overrides it. The
    /// replacement samplers run stochastic DDIM (`sigma_eta = 1`); the
    /// optimizing and projecting ones run deterministic steps.
    pub fn preset(self) -> CoPaintConfig {
        match self {
            Method::CoPaint => CoPaintConfig::copaint(),
            Method::CoPaintTt | Method::Ddnm => CoPaintConfig::copaint_tt(),
            Method::CoPaintFast => CoPaintConfig::copaint_fast(),
            Method::Blended | Method::RepaintLite => CoPaintConfig {
                sigma_eta: 1.0,
                ..CoPaintConfig::copaint_tt()
            },
        }
    }

    pub fn run<D: Denoiser + ?Sized>(
        self,
        schedule: &NoiseSchedule,
        denoiser: &D,
        obs: &Observation,
        config: &CoPaintConfig,
        rng: &mut SamplerRng,
    ) -> Result<(Vec<f64>, RunRecord)> {
        let out = match self {
            Method::CoPaint | Method::CoPaintTt | Method::CoPaintFast => {
                copaint_run(schedule, denoiser, obs, config, rng)?
            }
            Method::Blended => blended_run(schedule, denoiser, obs, rng)?,
            Method::Ddnm => ddnm_run(schedule, denoiser, obs, rng)?,
            Method::RepaintLite => repaint_lite_run(schedule, denoiser, obs, config, rng)?,
        };
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            CliError::usage(format!("unknown method '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// A fully resolved sampler: config plus the schedule it runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub method: Method,
    pub config: CoPaintConfig,
    pub schedule: ScheduleSpec,
}

impl Resolved {
    /// Applies the sampler keys of `settings` over the method's preset.
    /// `train_steps` defaults to `model_train_steps`.
    pub fn new(method: Method, settings: &Settings, model_train_steps: usize, seed: u64) -> Result<Self> {
        let mut config = method.preset();
        config.seed = seed;
        config.steps = settings.parsed_or("steps", config.steps)?;
        config.grad_steps = settings.parsed_or("grad_steps", config.grad_steps)?;
        config.learning_rate = settings.parsed_or("learning_rate", config.learning_rate)?;
        config.xi_decay = settings.parsed_or("xi_decay", config.xi_decay)?;
        config.travel_interval = settings.parsed_or("tau", config.travel_interval)?;
        config.travel_count = settings.parsed_or("travel_count", config.travel_count)?;
        config.substeps = settings.parsed_or("substeps", config.substeps)?;
        config.sigma_eta = settings.parsed_or("sigma_eta", config.sigma_eta)?;
        config.final_projection = match settings.get("final_projection").unwrap_or("auto") {
            "auto" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => {
                return Err(CliError::usage(format!(
                    "final_projection must be auto, true or false, got '{other}'"
                )))
            }
        };

        let train_steps = settings.parsed_or("train_steps", model_train_steps)?;
        if train_steps != model_train_steps {
            return Err(CliError::usage(format!(
                "train_steps = {train_steps} does not match the model's {model_train_steps}"
            )));
        }
        if config.steps == 0 || config.steps > train_steps {
            return Err(CliError::usage(format!(
                "steps must be in 1..={train_steps}, got {}",
                config.steps
            )));
        }
        let mut schedule = config.schedule_spec(train_steps);
        schedule.beta_start = settings.parsed_or("beta_start", schedule.beta_start)?;
        schedule.beta_end = settings.parsed_or("beta_end", schedule.beta_end)?;
        Ok(Self {
            method,
            config,
            schedule,
        })
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule> {
        Ok(self.schedule.build()?)
    }

    /// Writes every resolved sampler key into `out`.
    pub fn describe(&self, out: &mut Settings) {
        let c = &self.config;
        out.set("method", self.method);
        out.set("steps", c.steps);
        out.set("grad_steps", c.grad_steps);
        out.set("learning_rate", c.learning_rate);
        out.set("xi_decay", c.xi_decay);
        out.set("tau", c.travel_interval);
        out.set("travel_count", c.travel_count);
        out.set("substeps", c.substeps);
        out.set("sigma_eta", c.sigma_eta);
        out.set("final_projection", projection_name(c.final_projection));
        describe_schedule(&self.schedule, out);
    }

    /// A one-line summary, used where several methods share a manifest.
    pub fn compact(&self) -> String {
        let c = &self.config;
        format!(
            "{}(steps={} grad_steps={} learning_rate={} xi_decay={} tau={} travel_count={} substeps={} sigma_eta={} final_projection={})",
            self.method,
            c.steps,
            c.grad_steps,
            c.learning_rate,
            c.xi_decay,
            c.travel_interval,
            c.travel_count,
            c.substeps,
            c.sigma_eta,
            projection_name(c.final_projection)
        )
    }
}

fn projection_name(p: Option<bool>) -> &'static str {
    match p {
        None => "auto",
        Some(true) => "true",
        Some(false) => "false",
    }
}

/// The schedule as `(train_steps, beta_start, beta_end, indices)`; `eta`
/// is recorded as `sigma_eta` by the caller.
pub fn describe_schedule(spec: &ScheduleSpec, out: &mut Settings) {
    out.set("train_steps", spec.train_steps);
    out.set("beta_start", spec.beta_start);
    out.set("beta_end", spec.beta_end);
    out.set(
        "schedule.indices",
        spec.indices.as_deref().map_or_else(|| "all".to_string(), join),
    );
}
