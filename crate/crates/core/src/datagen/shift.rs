use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::law::cholesky;

/// Shift the mean of `N(mean, Σ)` along a random direction so that the
/// symmetric KL divergence to `N(mean + v, Σ)` equals `skl`.
///
/// With a shared covariance, `sKL = vᵀ Σ⁻¹ v`, so `v = c·u` with
/// `c = sqrt(skl / uᵀ Σ⁻¹ u)` for a uniformly random unit `u`.
/// Returns the shifted mean.
pub fn gaussian_change_mean_shift(mean: &[f64], covariance: &DMatrix<f64>, skl: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::Shape { expected: d, got: covariance.nrows() });
    }
    if !(skl > 0.0) || !skl.is_finite() {
        return Err(Error::Config(format!("target sKL must be positive, got {skl}")));
    }
    let chol = cholesky(covariance)?;
    let u = loop {
        let g = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 1e-12 {
            break g / norm;
        }
    };
    // uᵀ Σ⁻¹ u = |L⁻¹ u|² with Σ = L Lᵀ.
    let w = chol
        .solve_lower_triangular(&u)
        .ok_or_else(|| Error::Config("singular covariance".into()))?;
    let c = (skl / w.norm_squared()).sqrt();
    Ok(mean.iter().zip(u.iter()).map(|(m, ui)| m + c * ui).collect())
}

/// `KL(N(m0, s0) ‖ N(m1, s1))`.
pub fn gaussian_kl(m0: &[f64], s0: &DMatrix<f64>, m1: &[f64], s1: &DMatrix<f64>) -> Result<f64> {
    let d = m0.len() as f64;
    let l0 = cholesky(s0)?;
    let l1 = cholesky(s1)?;
    let inv1 = nalgebra::Cholesky::new(s1.clone())
        .expect("factorized above")
        .inverse();
    let diff = DVector::from_iterator(m0.len(), m0.iter().zip(m1).map(|(a, b)| b - a));
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = (&inv1 * s0).trace();
    let maha = (diff.transpose() * &inv1 * &diff)[(0, 0)];
    Ok(0.5 * (trace + maha - d + logdet(&l1) - logdet(&l0)))
}

/// `KL(φ0 ‖ φ1) + KL(φ1 ‖ φ0)` for Gaussians.
pub fn symmetric_gaussian_kl(m0: &[f64], s0: &DMatrix<f64>, m1: &[f64], s1: &DMatrix<f64>) -> Result<f64> {
    Ok(gaussian_kl(m0, s0, m1, s1)? + gaussian_kl(m1, s1, m0, s0)?)
}
