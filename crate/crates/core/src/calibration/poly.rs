use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::quantile::RawThreshold;

/// Coefficients `c₀..c_q` of `h(t) = Σₘ cₘ t^{-m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    /// Weighted root-mean-square residual of the fit.
    pub rms: f64,
}

impl PolyFit {
    pub fn eval(&self, t: f64) -> f64 {
        eval(&self.coefficients, t)
    }
}

/// Horner evaluation in `x = 1/t`.
pub(crate) fn eval(coefficients: &[f64], t: f64) -> f64 {
    let x = 1.0 / t;
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Weighted least squares of `h_t` on `{1, t⁻¹, …, t⁻ᵠ}`, weights equal to
/// the survivor counts.
pub fn fit_threshold_polynomial(raw: &[RawThreshold], degree: usize) -> Result<PolyFit> {
    if degree == 0 {
        return Err(Error::Fit("degree must be at least 1".into()));
    }
    let cols = degree + 1;
    if raw.len() < cols {
        return Err(Error::Fit(format!(
            "{} points cannot determine {cols} coefficients",
            raw.len()
        )));
    }
    let n = raw.len();
    let mut design = DMatrix::<f64>::zeros(n, cols);
    let mut rhs = DVector::<f64>::zeros(n);
    for (row, p) in raw.iter().enumerate() {
        let w = (p.survivors.max(1) as f64).sqrt();
        let x = 1.0 / p.t as f64;
        let mut basis = w;
        for col in 0..cols {
            design[(row, col)] = basis;
            basis *= x;
        }
        rhs[row] = w * p.h;
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-15) {
        return Err(Error::Fit("design matrix is rank deficient".into()));
    }
    let solution = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let residual = &design * &solution - &rhs;
    let total_weight: f64 = raw.iter().map(|p| p.survivors.max(1) as f64).sum();
    let rms = (residual.norm_squared() / total_weight).sqrt();
    Ok(PolyFit {
        coefficients: solution.iter().copied().collect(),
        rms,
    })
}
