mod common;

use common::mean_and_stderr;
use copaint_core::rng::{seeded, stream};
use copaint_core::sampler::{estimate_x0, forward_sample, rollout_deterministic, time_travel};
use copaint_core::{ConstantDenoiser, NoiseSchedule};

const DRAWS: usize = 100_000;

fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(50, 1e-4, 0.05, 0.0).unwrap()
}

/// Per-coordinate sample mean and variance of `draws` vectors.
fn moments(draws: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = draws[0].len();
    let count = draws.len() as f64;
    let mut mean = vec![0.0; n];
    for d in draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v / count;
        }
    }
    let mut var = vec![0.0; n];
    for d in draws {
        for ((s, v), m) in var.iter_mut().zip(d).zip(&mean) {
            *s += (v - m) * (v - m) / (count - 1.0);
        }
    }
    (mean, var)
}

#[test]
fn forward_sample_mean_within_clt_bound() {
    let s = schedule();
    let x0 = [0.8, -0.4, 0.0];
    let t = 30;
    let mut rng = seeded(11);
    let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| forward_sample(&s, &x0, t, &mut rng).unwrap()).collect();
    let (mean, var) = moments(&draws);
    let ab = s.alpha_bar(t);
    let bound = 4.0 * ((1.0 - ab) / DRAWS as f64).sqrt();
    let var_bound = 4.0 * (1.0 - ab) * (2.0 / DRAWS as f64).sqrt();
    for i in 0..3 {
        assert!((mean[i] - ab.sqrt() * x0[i]).abs() <= bound, "coord {i}");
        assert!((var[i] - (1.0 - ab)).abs() <= var_bound, "coord {i}");
    }
}

#[test]
fn time_travel_composes_with_forward_sampling() {
    let s = schedule();
    let x0 = [1.0, -0.5];
    let (t, tau) = (12, 20);
    let mut direct_rng = stream(5, 0);
    let mut two_step_rng = stream(5, 1);
    let direct: Vec<Vec<f64>> = (0..DRAWS).map(|_| forward_sample(&s, &x0, t + tau, &mut direct_rng).unwrap()).collect();
    let composed: Vec<Vec<f64>> = (0..DRAWS)
        .map(|_| {
            let xt = forward_sample(&s, &x0, t, &mut two_step_rng).unwrap();
            time_travel(&s, &xt, t, tau, &mut two_step_rng).unwrap()
        })
        .collect();
    let (m1, v1) = moments(&direct);
    let (m2, v2) = moments(&composed);
    let var = 1.0 - s.alpha_bar(t + tau);
    // Difference of two independent sample means / variances.
    let mean_bound = 4.0 * (2.0 * var / DRAWS as f64).sqrt();
    let var_bound = 4.0 * var * (4.0 / DRAWS as f64).sqrt();
    for i in 0..2 {
        assert!((m1[i] - m2[i]).abs() <= mean_bound, "mean coord {i}: {} vs {}", m1[i], m2[i]);
        assert!((v1[i] - v2[i]).abs() <= var_bound, "var coord {i}: {} vs {}", v1[i], v2[i]);
    }
}

#[test]
fn time_travel_from_origin_is_scaled_noise() {
    let s = schedule();
    let (t, tau) = (3, 7);
    let ratio = s.alpha_bar(t + tau) / s.alpha_bar(t);
    let samples: Vec<f64> = {
        let mut rng = seeded(2);
        (0..20_000).map(|_| time_travel(&s, &[0.0], t, tau, &mut rng).unwrap()[0]).collect()
    };
    let (mean, se) = mean_and_stderr(&samples);
    assert!(mean.abs() <= 4.0 * se);
    let sd = (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
    assert!((sd - (1.0 - ratio).sqrt()).abs() < 0.02 * (1.0 - ratio).sqrt());
}

#[test]
fn delta_prior_rollout_and_estimates_return_the_point() {
    let s = schedule();
    let m = vec![0.25, -1.5, 0.75];
    let den = ConstantDenoiser::new(m.clone());
    let start = [3.0, -2.0, 0.1];
    assert_eq!(rollout_deterministic(&s, &den, &start, s.len()).unwrap(), m);
    for h in 1..=5 {
        let est = estimate_x0(&s, &den, &start, 40, h).unwrap();
        for (a, b) in est.iter().zip(&m) {
            assert!((a - b).abs() < 1e-12, "H = {h}");
        }
    }
}
