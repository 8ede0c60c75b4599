mod common;

use common::*;
use copaint_core::conditioning::RevealOperator;
use copaint_core::linalg::Matrix;
use copaint_core::oracle::{condition, condition_on, exact_marginal, posterior_mean_given_noisy};
use copaint_core::rng::{normal_vec, seeded};
use copaint_core::{Denoiser, GaussianWorld, NoiseSchedule, Observation};
use rand::Rng;

#[test]
fn independent_coordinates_ignore_the_observation() {
    let mut cov = Matrix::identity(3);
    cov[(0, 0)] = 2.0;
    cov[(2, 2)] = 0.5;
    let world = GaussianWorld::new(vec![1.0, -1.0, 0.5], cov).unwrap();
    let obs = Observation::new(RevealOperator::from_mask(vec![false, true, false]), vec![7.0]).unwrap();
    let c = condition(&world, &obs).unwrap();
    assert_eq!(c.hidden, vec![0, 2]);
    assert_eq!(c.mean, vec![1.0, 0.5]);
    assert_eq!(c.cov, Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.5]]).unwrap());
}

#[test]
fn bivariate_formula() {
    for &(rho, s) in &[(0.3, 1.0), (-0.8, 0.25), (0.95, -2.0)] {
        let world = GaussianWorld::new(vec![0.0, 0.0], Matrix::from_rows(&[&[1.0, rho], &[rho, 1.0]]).unwrap()).unwrap();
        let c = condition_on(&world, &[0], &[s]).unwrap();
        assert!((c.mean[0] - rho * s).abs() < 1e-15);
        assert!((c.cov[(0, 0)] - (1.0 - rho * rho)).abs() < 1e-15);
    }
}

#[test]
fn mirror_world_golden() {
    let c = condition(&mirror_world(), &mirror_half_obs()).unwrap();
    for (a, b) in c.mean.iter().zip(&MIRROR_CONDITIONAL_MEAN) {
        assert!((a - b).abs() < 1e-12);
    }
    let full = c.full_mean();
    assert_eq!(&full[..4], &MIRROR_S0);
    assert_eq!(c.hidden_part(&full).unwrap(), c.mean);
    assert!(c.cov.is_symmetric(0.0));
    c.hidden_world().unwrap();
}

#[test]
fn sequential_conditioning_is_consistent() {
    let mut rng = seeded(31);
    for _ in 0..20 {
        let n = rng.random_range(3..=9);
        let world = GaussianWorld::new(normal_vec(&mut rng, n), random_spd(n, &mut rng)).unwrap();
        let values = normal_vec(&mut rng, 2);
        let both = condition_on(&world, &[0, 1], &values).unwrap();
        let first = condition_on(&world, &[0], &values[..1]).unwrap();
        // Coordinate 1 is index 0 among `first`'s hidden coordinates.
        let second = condition_on(&first.hidden_world().unwrap(), &[0], &values[1..]).unwrap();
        assert!(rel_err(&second.mean, &both.mean) < 1e-12);
        assert!(rel_err(second.cov.as_slice(), both.cov.as_slice()) < 1e-12);
        // Conditioning again on nothing changes nothing.
        let again = condition_on(&both.hidden_world().unwrap(), &[], &[]).unwrap();
        assert_eq!(again.mean, both.mean);
        assert_eq!(again.cov, both.cov);
    }
}

#[test]
fn marginals() {
    let s = NoiseSchedule::from_alpha_bars(&[0.5, 0.1], 0.0).unwrap();
    let world = mirror_world();
    assert_eq!(exact_marginal(&world, &s, 0).unwrap(), world);

    let standard = GaussianWorld::isotropic(vec![0.0; 3], 1.0).unwrap();
    for t in 0..=2 {
        let m = exact_marginal(&standard, &s, t).unwrap();
        assert_eq!(m.mean(), &[0.0; 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.cov()[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    let rho = 0.95;
    let m = exact_marginal(&world, &s, 1).unwrap();
    for i in 0..4 {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; 8];
            v[i] = std::f64::consts::FRAC_1_SQRT_2;
            v[7 - i] = sign * std::f64::consts::FRAC_1_SQRT_2;
            let cv = m.cov().matvec(&v).unwrap();
            let lambda = 0.5 * (1.0 + sign * rho) + 0.5;
            for k in 0..8 {
                assert!((cv[k] - lambda * v[k]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn posterior_mean_matches_the_denoiser() {
    let mut rng = seeded(32);
    let s = NoiseSchedule::linear(30, 1e-3, 0.1, 0.0).unwrap();
    for _ in 0..40 {
        let n = rng.random_range(1..=16);
        let world = GaussianWorld::new(normal_vec(&mut rng, n), random_spd(n, &mut rng)).unwrap();
        let t = rng.random_range(1..=30);
        let x = normal_vec(&mut rng, n);
        let oracle = posterior_mean_given_noisy(&world, s.alpha_bar(t), &x).unwrap();
        let value = world.value(&s, &x, t).unwrap();
        assert!(rel_err(&value, &oracle) <= 1e-10);
    }
}

#[test]
fn size_and_operator_limits() {
    let big = GaussianWorld::isotropic(vec![0.0; 65], 1.0).unwrap();
    assert!(condition_on(&big, &[0], &[1.0]).is_err());
    assert!(posterior_mean_given_noisy(&big, 0.5, &[0.0; 65]).is_err());
    let pool = RevealOperator::avg_pool(copaint_core::Geometry::Line(8), 2).unwrap();
    let obs = Observation::new(pool, vec![0.0; 4]).unwrap();
    assert!(condition(&mirror_world(), &obs).is_err());
    assert!(condition_on(&mirror_world(), &[1, 1], &[0.0, 0.0]).is_err());
}
