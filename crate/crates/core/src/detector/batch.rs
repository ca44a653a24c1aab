use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::quantile::upper_quantile;
use crate::error::{Error, Result};
use crate::quanttree::{pi_tilde, validate_target_probs, BinProbabilitySampler, QuantTreePartition};
use crate::rng::{substream, Domain};
use crate::scalar::Scalar;

use super::run::{Observation, StreamMonitor};

/// Pearson statistic of one batch: `Σⱼ (nⱼ - νπ̃ⱼ)² / (νπ̃ⱼ)`.
pub fn pearson_statistic<F: Scalar>(counts: &[usize], pi_tilde: &[F]) -> F {
    let nu = F::of(counts.iter().sum::<usize>() as f64);
    let mut acc = F::zero();
    for (&c, &p) in counts.iter().zip(pi_tilde) {
        let expected = nu * p;
        let d = F::of(c as f64) - expected;
        acc = acc + d * d / expected;
    }
    acc
}

/// Threshold `h^ν` with per-batch false-positive probability at most
/// `α = ν / ARL₀`, which bounds the online ARL₀ from below by the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchThreshold {
    pub nu: usize,
    pub arl0_target: f64,
    pub alpha: f64,
    pub h: f64,
    pub target_probs: Vec<f64>,
    pub n_train: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// Monte Carlo calibration of the batch threshold. Each replicate draws bin
/// probabilities from their Dirichlet law and one batch of `ν` samples.
pub fn calibrate_batch_threshold(
    target_probs: &[f64],
    n_train: usize,
    nu: usize,
    arl0_target: f64,
    replicates: usize,
    seed: u64,
) -> Result<BatchThreshold> {
    validate_target_probs(target_probs)?;
    if nu == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let alpha = nu as f64 / arl0_target;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "per-batch level nu/ARL0 = {alpha} outside (0,1)"
        )));
    }
    if replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    let sampler = BinProbabilitySampler::new(target_probs, n_train)?;
    let reference = pi_tilde(target_probs, n_train);
    let k = target_probs.len();
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Domain::BatchCalibration, i as u64);
            let mut cum = vec![0.0; k];
            sampler.fill_dirichlet(&mut rng, &mut cum);
            for j in 1..k {
                cum[j] += cum[j - 1];
            }
            cum[k - 1] = 1.0;
            let mut counts = vec![0usize; k];
            for _ in 0..nu {
                let u: f64 = rng.random();
                counts[cum.partition_point(|&c| c <= u)] += 1;
            }
            pearson_statistic(&counts, &reference)
        })
        .collect();
    let mut scratch = stats;
    let h = upper_quantile(&mut scratch, alpha);
    Ok(BatchThreshold {
        nu,
        arl0_target,
        alpha,
        h,
        target_probs: target_probs.to_vec(),
        n_train,
        replicates,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOutcome<F> {
    pub statistic: F,
    pub detected: bool,
}

/// Batch-wise Pearson monitor over non-overlapping windows of `ν` samples.
#[derive(Debug, Clone)]
pub struct BatchDetector<'p, F: Scalar> {
    partition: &'p QuantTreePartition<F>,
    threshold: &'p BatchThreshold,
    counts: Vec<usize>,
    filled: usize,
    batches: u64,
    t: u64,
    detected_at: Option<u64>,
}

impl<'p, F: Scalar> BatchDetector<'p, F> {
    pub fn new(partition: &'p QuantTreePartition<F>, threshold: &'p BatchThreshold) -> Result<Self> {
        if threshold.target_probs != partition.target_probs() || threshold.n_train != partition.n_train() {
            return Err(Error::CalibrationMismatch(
                "batch threshold calibrated for different target probabilities or training size".into(),
            ));
        }
        Ok(BatchDetector {
            partition,
            threshold,
            counts: vec![0; partition.k()],
            filled: 0,
            batches: 0,
            t: 0,
            detected_at: None,
        })
    }

    /// Buffer one sample; every `ν`-th call evaluates the batch.
    pub fn step(&mut self, x: &[F]) -> Result<Option<BatchOutcome<F>>> {
        if let Some(t) = self.detected_at {
            return Err(Error::MonitoringHalted(t));
        }
        let bin = self.partition.lookup(x)?;
        self.t += 1;
        self.counts[bin] += 1;
        self.filled += 1;
        if self.filled < self.threshold.nu {
            return Ok(None);
        }
        let statistic = pearson_statistic(&self.counts, self.partition.pi_tilde());
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.filled = 0;
        self.batches += 1;
        let detected = statistic > F::of(self.threshold.h);
        if detected {
            self.detected_at = Some(self.t);
        }
        Ok(Some(BatchOutcome { statistic, detected }))
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    /// Detection time in samples (`ν` times the batch index).
    pub fn detected_at(&self) -> Option<u64> {
        self.detected_at
    }
}

impl<F: Scalar> StreamMonitor<F> for BatchDetector<'_, F> {
    fn observe(&mut self, x: &[F]) -> Result<Observation> {
        let out = self.step(x)?;
        Ok(Observation {
            t: self.t,
            statistic: out.map(|o| o.statistic.widen()),
            threshold: out.map(|_| self.threshold.h),
            detected: out.is_some_and(|o| o.detected),
        })
    }
}
