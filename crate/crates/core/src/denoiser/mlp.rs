use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::schedule::NoiseSchedule;

/// Parameter layout of an [`MlpDenoiser`]: layer widths `d0..dk` and the
/// number of diffusion steps the time embedding covers.
///
/// The network input is the state (`dk` values) followed by an embedding of
/// width `d0 - dk`; the output is the noise prediction of width `dk`. Hidden
/// layers use `tanh`, the output layer is affine.
///
/// Parameters live in one flat vector: for each layer its weight matrix
/// (`d_{i+1} × d_i`, row-major) and then its bias, followed by the
/// `steps × embed_dim` embedding table, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    dims: Vec<usize>,
    steps: usize,
}

impl MlpLayout {
    pub fn new(dims: Vec<usize>, steps: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidModel("need at least an input and an output width".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidModel("layer widths must be positive".into()));
        }
        let (d0, dk) = (dims[0], *dims.last().unwrap());
        if d0 < dk {
            return Err(Error::InvalidModel(format!(
                "input width {d0} is smaller than the state width {dk}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidModel("time embedding needs at least one step".into()));
        }
        Ok(Self { dims, steps })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn embed_dim(&self) -> usize {
        self.dims[0] - self.state_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offset of layer `l`'s weights; its bias follows immediately.
    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|i| self.dims[i + 1] * (self.dims[i] + 1)).sum()
    }

    fn embedding_offset(&self) -> usize {
        self.layer_offset(self.num_layers())
    }

    pub fn param_count(&self) -> usize {
        self.embedding_offset() + self.steps * self.embed_dim()
    }
}

/// A small epsilon-prediction network with a lookup time embedding.
///
/// As a denoiser it returns `(x − √(1−ᾱₜ)·ε(x, t)) / √ᾱₜ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    layout: MlpLayout,
    params: Vec<f64>,
}

/// Post-activation values of one forward pass, input first.
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl MlpDenoiser {
    pub fn zeros(layout: MlpLayout) -> Self {
        let params = vec![0.0; layout.param_count()];
        Self { layout, params }
    }

    pub fn from_params(layout: MlpLayout, params: Vec<f64>) -> Result<Self> {
        check_len("mlp parameter vector", layout.param_count(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self { layout, params })
    }

    /// Glorot-uniform hidden weights, zero biases, a zero output layer (so
    /// the untrained model predicts ε ≡ 0) and a sinusoidal initial
    /// embedding table.
    pub fn init<R: Rng + ?Sized>(layout: MlpLayout, rng: &mut R) -> Self {
        let mut model = Self::zeros(layout);
        let last = model.layout.num_layers() - 1;
        for l in 0..last {
            let (fan_in, fan_out) = (model.layout.dims[l], model.layout.dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = model.layout.layer_offset(l);
            for w in &mut model.params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        let e = model.layout.embed_dim();
        let steps = model.layout.steps;
        let off = model.layout.embedding_offset();
        for s in 0..steps {
            let phase = (s + 1) as f64 / steps as f64;
            for k in 0..e {
                let freq = core::f64::consts::PI * (1 + k / 2) as f64;
                model.params[off + s * e + k] = if k % 2 == 0 {
                    (freq * phase).sin()
                } else {
                    (freq * phase).cos()
                };
            }
        }
        model
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Model step used for schedule step `t`, validating that the schedule
    /// was derived from the one the embedding table was built for.
    fn model_step(&self, schedule: &NoiseSchedule, t: usize) -> Result<usize> {
        schedule.check_step(t)?;
        if schedule.source_len() != self.layout.steps {
            return Err(Error::InvalidModel(format!(
                "model embeds {} steps but the schedule derives from {}",
                self.layout.steps,
                schedule.source_len()
            )));
        }
        Ok(schedule.source_step(t))
    }

    pub(crate) fn forward(&self, x: &[f64], step: usize) -> Result<Trace> {
        let n = self.layout.state_dim();
        check_len("mlp input", n, x.len())?;
        if step == 0 || step > self.layout.steps {
            return Err(Error::StepOutOfRange {
                t: step,
                max: self.layout.steps,
            });
        }
        let e = self.layout.embed_dim();
        let mut input = Vec::with_capacity(n + e);
        input.extend_from_slice(x);
        let emb = self.layout.embedding_offset() + (step - 1) * e;
        input.extend_from_slice(&self.params[emb..emb + e]);

        let last = self.layout.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.layout.dims.len());
        acts.push(input);
        for l in 0..=last {
            let (din, dout) = (self.layout.dims[l], self.layout.dims[l + 1]);
            let off = self.layout.layer_offset(l);
            let w = &self.params[off..off + din * dout];
            let b = &self.params[off + din * dout..off + din * dout + dout];
            let h = acts.last().unwrap();
            let out: Vec<f64> = (0..dout)
                .map(|o| {
                    let z = b[o] + w[o * din..(o + 1) * din].iter().zip(h).map(|(a, c)| a * c).sum::<f64>();
                    if l < last {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    /// Back-propagates `grad_out` (w.r.t. the network output). Returns the
    /// gradient w.r.t. the full network input; when `param_grad` is given,
    /// parameter gradients are accumulated into it (same layout as the
    /// parameters, embedding row of `step` included).
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        step: usize,
        grad_out: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let last = self.layout.num_layers() - 1;
        let mut delta = grad_out.to_vec();
        for l in (0..=last).rev() {
            let (din, dout) = (self.layout.dims[l], self.layout.dims[l + 1]);
            if l < last {
                for (d, h) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - h * h;
                }
            }
            let off = self.layout.layer_offset(l);
            let input = &trace.acts[l];
            if let Some(g) = param_grad.as_deref_mut() {
                for o in 0..dout {
                    let row = &mut g[off + o * din..off + (o + 1) * din];
                    for (gi, xi) in row.iter_mut().zip(input) {
                        *gi += delta[o] * xi;
                    }
                    g[off + din * dout + o] += delta[o];
                }
            }
            let w = &self.params[off..off + din * dout];
            let mut prev = vec![0.0; din];
            for o in 0..dout {
                let d = delta[o];
                for (p, wi) in prev.iter_mut().zip(&w[o * din..(o + 1) * din]) {
                    *p += d * wi;
                }
            }
            delta = prev;
        }
        if let Some(g) = param_grad {
            let n = self.layout.state_dim();
            let e = self.layout.embed_dim();
            let emb = self.layout.embedding_offset() + (step - 1) * e;
            for k in 0..e {
                g[emb + k] += delta[n + k];
            }
        }
        delta
    }

    /// Raw noise prediction `ε(x, step)` at model step `step`.
    pub fn epsilon(&self, x: &[f64], step: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, step)?.output().to_vec())
    }
}

impl Denoiser for MlpDenoiser {
    fn dim(&self) -> usize {
        self.layout.state_dim()
    }

    fn value(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let step = self.model_step(schedule, t)?;
        let eps = self.epsilon(x, step)?;
        let ab = schedule.alpha_bar(t);
        let (s, c) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x.iter().zip(&eps).map(|(xi, ei)| (xi - c * ei) / s).collect())
    }

    fn vjp(&self, schedule: &NoiseSchedule, x: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_vjp(schedule, x, t, v)?.1)
    }

    fn value_and_vjp(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        v: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let step = self.model_step(schedule, t)?;
        check_len("mlp cotangent", self.dim(), v.len())?;
        let trace = self.forward(x, step)?;
        let ab = schedule.alpha_bar(t);
        let (s, c) = (ab.sqrt(), (1.0 - ab).sqrt());
        let value = x.iter().zip(trace.output()).map(|(xi, ei)| (xi - c * ei) / s).collect();
        let g_eps: Vec<f64> = v.iter().map(|vi| -c / s * vi).collect();
        let g_in = self.backward(&trace, step, &g_eps, None);
        let pull = v.iter().zip(&g_in).map(|(vi, gi)| vi / s + gi).collect();
        Ok((value, pull))
    }
}
