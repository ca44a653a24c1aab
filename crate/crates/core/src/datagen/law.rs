use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::csv::{ingest_csv, Dataset, IngestOptions};

/// Covariance descriptor of a Gaussian law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    /// The literal string `"identity"`.
    Named(String),
    /// `Σ_ij = ρ^|i−j|`.
    Ar1 { ar1: f64 },
    Diagonal { diagonal: Vec<f64> },
    Matrix(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn identity() -> Self {
        Covariance::Named("identity".into())
    }

    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            Covariance::Named(name) if name == "identity" => DMatrix::identity(d, d),
            Covariance::Named(name) => {
                return Err(Error::Config(format!("unknown covariance {name:?}")));
            }
            Covariance::Ar1 { ar1 } => {
                if !(ar1.abs() < 1.0) {
                    return Err(Error::Config(format!("AR(1) coefficient {ar1} outside (-1, 1)")));
                }
                DMatrix::from_fn(d, d, |i, j| ar1.powi(i.abs_diff(j) as i32))
            }
            Covariance::Diagonal { diagonal } => {
                check_len(diagonal.len(), d)?;
                DMatrix::from_diagonal(&DVector::from_column_slice(diagonal))
            }
            Covariance::Matrix(rows) => {
                check_len(rows.len(), d)?;
                for row in rows {
                    check_len(row.len(), d)?;
                }
                DMatrix::from_fn(d, d, |i, j| rows[i][j])
            }
        };
        Ok(m)
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub(crate) fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Config("covariance is not symmetric".into()));
    }
    nalgebra::Cholesky::new(cov.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Config("covariance is not positive definite".into()))
}

/// A data-generating law `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    Gaussian {
        mean: Vec<f64>,
        covariance: Covariance,
    },
    /// Uniform on the box `[low, high]`.
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// Rows of a CSV file, sampled without replacement.
    Csv {
        path: PathBuf,
        #[serde(default = "yes")]
        standardize: bool,
        /// Absolute jitter scale; `1e-6` column standard deviations if absent.
        #[serde(default)]
        jitter_sigma: Option<f64>,
        /// Seed of the jitter noise.
        #[serde(default)]
        seed: u64,
    },
}

fn yes() -> bool {
    true
}

impl Law {
    pub fn unit_cube(d: usize) -> Self {
        Law::Uniform {
            low: vec![0.0; d],
            high: vec![1.0; d],
        }
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Law::Gaussian {
            mean: vec![0.0; d],
            covariance: Covariance::identity(),
        }
    }

    /// A Gaussian with standard normal mean and covariance `A Aᵀ/d + I/2`,
    /// `A` having standard normal entries.
    pub fn random_gaussian(d: usize, rng: &mut Rng) -> Self {
        let mean = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let cov = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
        let rows = (0..d).map(|i| (0..d).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect()).collect();
        Law::Gaussian {
            mean,
            covariance: Covariance::Matrix(rows),
        }
    }

    pub(crate) fn resolve(&self, d: usize) -> Result<Resolved> {
        match self {
            Law::Gaussian { mean, covariance } => {
                check_len(mean.len(), d)?;
                let cov = covariance.matrix(d)?;
                let chol = cholesky(&cov)?;
                Ok(Resolved::Gaussian {
                    mean: DVector::from_column_slice(mean),
                    cov,
                    chol,
                })
            }
            Law::Uniform { low, high } => {
                check_len(low.len(), d)?;
                check_len(high.len(), d)?;
                if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                    return Err(Error::Config("uniform box needs low < high in every dimension".into()));
                }
                Ok(Resolved::Uniform {
                    low: low.clone(),
                    high: high.clone(),
                })
            }
            Law::Csv {
                path,
                standardize,
                jitter_sigma,
                seed,
            } => {
                let data = ingest_csv(
                    path,
                    &IngestOptions {
                        standardize: *standardize,
                        jitter_sigma: *jitter_sigma,
                        seed: *seed,
                    },
                )?;
                check_len(data.dim(), d)?;
                Ok(Resolved::Rows(Arc::new(data)))
            }
        }
    }
}

/// A law ready for sampling.
#[derive(Debug, Clone)]
pub(crate) enum Resolved {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        chol: DMatrix<f64>,
    },
    Uniform {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Rows(Arc<Dataset>),
}

impl Resolved {
    /// Sum of marginal variances.
    pub(crate) fn total_variance(&self) -> f64 {
        match self {
            Resolved::Gaussian { cov, .. } => cov.trace(),
            Resolved::Uniform { low, high } => low.iter().zip(high).map(|(l, h)| (h - l).powi(2) / 12.0).sum(),
            Resolved::Rows(data) => data.total_variance(),
        }
    }

    /// Draw one parametric sample. Row-backed laws are sampled by the stream.
    pub(crate) fn fill(&self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            Resolved::Gaussian { mean, chol, .. } => {
                let d = mean.len();
                let mut z = [0.0f64; 64];
                let mut heap;
                let z: &mut [f64] = if d <= 64 {
                    &mut z[..d]
                } else {
                    heap = vec![0.0; d];
                    &mut heap
                };
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for i in 0..d {
                    let mut acc = mean[i];
                    for j in 0..=i {
                        acc += chol[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
            }
            Resolved::Uniform { low, high } => {
                for ((o, l), h) in out.iter_mut().zip(low).zip(high) {
                    *o = l + (h - l) * rng.random::<f64>();
                }
            }
            Resolved::Rows(_) => unreachable!("row laws are drawn by index"),
        }
    }
}
