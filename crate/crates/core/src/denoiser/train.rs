use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::mlp::{MlpDenoiser, MlpLayout};
use crate::error::{check_len, Error, Result};
use crate::rng::{normal_vec, stream};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            embed_dim: 16,
            epochs: 100,
            batch_size: 64,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpDenoiser,
    /// Mean per-coordinate squared error of each training epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-out loss of the trained model on a fixed evaluation draw.
    pub final_loss: f64,
    /// Loss of the ε ≡ 0 model on the same evaluation draw.
    pub zero_model_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// One noised training example: `(x_t, ε, model step)`.
fn corrupt<R: Rng + ?Sized>(x0: &[f64], schedule: &NoiseSchedule, rng: &mut R) -> (Vec<f64>, Vec<f64>, usize) {
    let t = rng.random_range(1..=schedule.len());
    let eps = normal_vec(rng, x0.len());
    let ab = schedule.alpha_bar(t);
    let (s, c) = (ab.sqrt(), (1.0 - ab).sqrt());
    let xt = x0.iter().zip(&eps).map(|(x, e)| s * x + c * e).collect();
    (xt, eps, schedule.source_step(t))
}

fn sq_err(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, e)| (p - e) * (p - e)).sum::<f64>() / pred.len() as f64
}

/// Trains an epsilon-prediction MLP on `data` by mini-batch Adam on
/// `E‖ε − ε_θ(√ᾱₜ x₀ + √(1−ᾱₜ) ε, t)‖²`.
///
/// `schedule` must be the full training schedule (not a sub-sampled one).
/// Deterministic in `config.seed`.
pub fn train_mlp(data: &[Vec<f64>], schedule: &NoiseSchedule, config: &TrainConfig) -> Result<TrainOutcome> {
    let dim = data
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidConfig("empty training set".into()))?;
    for x in data {
        check_len("training sample", dim, x.len())?;
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut dims = Vec::with_capacity(config.hidden.len() + 2);
    dims.push(dim + config.embed_dim);
    dims.extend_from_slice(&config.hidden);
    dims.push(dim);
    let layout = MlpLayout::new(dims, schedule.source_len())?;
    let mut model = MlpDenoiser::init(layout, &mut stream(config.seed, 0));

    let mut rng = stream(config.seed, 1);
    let mut adam = Adam::new(model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / (dim * batch.len()) as f64;
            for &idx in batch {
                let (xt, eps, step) = corrupt(&data[idx], schedule, &mut rng);
                let trace = model.forward(&xt, step)?;
                let pred = trace.output();
                total += sq_err(pred, &eps);
                let g_out: Vec<f64> = pred.iter().zip(&eps).map(|(p, e)| scale * (p - e)).collect();
                model.backward(&trace, step, &g_out, Some(&mut grad));
            }
            adam.update(model.params_mut(), &grad, config.learning_rate);
        }
        let loss = total / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss",
                t: epoch,
            });
        }
        epoch_losses.push(loss);
    }

    let (final_loss, zero_model_loss) = evaluate(&model, data, schedule, config.seed)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite {
            what: "evaluation loss",
            t: config.epochs,
        });
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
        final_loss,
        zero_model_loss,
    })
}

/// Loss of `model` and of the ε ≡ 0 model over one fixed noising of `data`.
pub(crate) fn evaluate(model: &MlpDenoiser, data: &[Vec<f64>], schedule: &NoiseSchedule, seed: u64) -> Result<(f64, f64)> {
    let mut rng = stream(seed, 2);
    let (mut fit, mut zero) = (0.0, 0.0);
    for x in data {
        let (xt, eps, step) = corrupt(x, schedule, &mut rng);
        fit += sq_err(&model.epsilon(&xt, step)?, &eps);
        zero += eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    }
    let n = data.len() as f64;
    Ok((fit / n, zero / n))
}
