#![allow(dead_code)]

use copaint_core::conditioning::standard_mask;
use copaint_core::copaint::CoPaintConfig;
use copaint_core::linalg::Matrix;
use copaint_core::rng::normal_vec;
use copaint_core::{Geometry, GaussianWorld, NoiseSchedule, Observation};
use rand::Rng;

pub const MIRROR_S0: [f64; 4] = [0.3, -0.7, 1.1, 0.25];

/// Conditional mean of coordinates 4..8 of the N = 8, rho = 0.95 mirror
/// world given `MIRROR_S0` on coordinates 0..4.
pub const MIRROR_CONDITIONAL_MEAN: [f64; 4] = [0.2375, 1.045, -0.665, 0.285];

pub fn default_schedule(config: &CoPaintConfig) -> NoiseSchedule {
    config.schedule_spec(1000).build().unwrap()
}

pub fn mirror_world() -> GaussianWorld {
    GaussianWorld::mirror(8, 0.95).unwrap()
}

pub fn mirror_half_obs() -> Observation {
    let op = standard_mask("half", Geometry::Line(8), 0).unwrap();
    Observation::new(op, MIRROR_S0.to_vec()).unwrap()
}

pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let a: Vec<f64> = normal_vec(rng, n * n);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = if i == j { 0.5 } else { 0.0 };
            for k in 0..n {
                s += a[i * n + k] * a[j * n + k] / n as f64;
            }
            data[i * n + j] = s;
        }
    }
    Matrix::from_row_major(n, n, data).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    num / den
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
