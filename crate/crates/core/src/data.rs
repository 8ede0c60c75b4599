//! Synthetic datasets.

use alloc::vec::Vec;
use rand::Rng;

use crate::denoiser::GaussianWorld;

/// Correlation between mirror pairs in the mirror dataset.
pub const MIRROR_RHO: f64 = 0.95;
/// Standard deviation of each coordinate before clamping.
pub const MIRROR_SCALE: f64 = 0.5;

/// Draws from a Gaussian world, clamped to `[-1, 1]`.
pub fn sample_clamped<R: Rng + ?Sized>(world: &GaussianWorld, scale: f64, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            world
                .sample(rng)
                .into_iter()
                .map(|v| (scale * v).clamp(-1.0, 1.0))
                .collect()
        })
        .collect()
}

/// Near-symmetric vectors: coordinate `i` and `dim - 1 - i` are correlated
/// with [`MIRROR_RHO`], each with standard deviation [`MIRROR_SCALE`],
/// clamped to `[-1, 1]`.
pub fn mirror_dataset<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let world = GaussianWorld::mirror(dim, MIRROR_RHO).expect("mirror covariance is positive definite for rho < 1");
    sample_clamped(&world, MIRROR_SCALE, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn mirror_samples_are_bounded_and_symmetric_ish() {
        let data = mirror_dataset(6, 2000, &mut stream(1, 0));
        assert!(data.iter().flatten().all(|v| v.abs() <= 1.0));
        let mean_gap: f64 = data.iter().map(|x| (x[0] - x[5]).abs()).sum::<f64>() / 2000.0;
        let mean_abs: f64 = data.iter().map(|x| x[0].abs()).sum::<f64>() / 2000.0;
        assert!(mean_gap < 0.5 * mean_abs);
    }
}
