//! Samplers for the bin-probability vector of a QuantTree partition.
//!
//! Two independent routes to the same law `D(π₁N, …, π_{K-1}N, π_KN + 1)`:
//! normalizing independent Gamma draws, and composing the stick-breaking
//! fractions `p̃ⱼ ~ Beta(πⱼN, (1 - Σ_{k≤j} πₖ)N + 1)` that a partition produces
//! cut by cut.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quanttree::validate_target_probs;
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Dirichlet,
    StickBreaking,
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct BinProbabilityVector(Vec<f64>);

impl BinProbabilityVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Dirichlet parameters of the bin masses.
pub fn dirichlet_params(target_probs: &[f64], n: usize) -> Vec<f64> {
    let mut params: Vec<f64> = target_probs.iter().map(|p| p * n as f64).collect();
    if let Some(last) = params.last_mut() {
        *last += 1.0;
    }
    params
}

#[derive(Debug, Clone)]
pub struct BinProbabilitySampler {
    params: Vec<f64>,
    gammas: Vec<Gamma<f64>>,
    sticks: Vec<Beta<f64>>,
}

impl BinProbabilitySampler {
    pub fn new(target_probs: &[f64], n: usize) -> Result<Self> {
        validate_target_probs(target_probs)?;
        if n == 0 {
            return Err(Error::Config("training size must be at least 1".into()));
        }
        let params = dirichlet_params(target_probs, n);
        let gammas = params
            .iter()
            .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        // Σ_{k>j} γₖ, accumulated from the back to avoid cancellation.
        let k = params.len();
        let mut tail = vec![0.0; k];
        for j in (0..k - 1).rev() {
            tail[j] = tail[j + 1] + params[j + 1];
        }
        let sticks = (0..k - 1)
            .map(|j| Beta::new(params[j], tail[j]).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(BinProbabilitySampler { params, gammas, sticks })
    }

    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, method: SamplerMethod, rng: &mut R) -> BinProbabilityVector {
        let mut out = vec![0.0; self.k()];
        match method {
            SamplerMethod::Dirichlet => self.fill_dirichlet(rng, &mut out),
            SamplerMethod::StickBreaking => self.fill_stick_breaking(rng, &mut out),
        }
        BinProbabilityVector(out)
    }

    /// Independent `Gamma(γⱼ, 1)` draws normalized by their sum.
    pub fn fill_dirichlet<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut total = 0.0;
        for (o, g) in out.iter_mut().zip(&self.gammas) {
            *o = g.sample(rng);
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn fill_stick_breaking<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut rest = 1.0;
        for (o, stick) in out.iter_mut().zip(&self.sticks) {
            let frac = stick.sample(rng);
            *o = rest * frac;
            rest *= 1.0 - frac;
        }
        *out.last_mut().expect("K >= 2") = rest;
    }
}

/// One draw of the bin-probability vector for `(π, N)` under `seed`.
pub fn sample_bin_probabilities(
    target_probs: &[f64],
    n: usize,
    method: SamplerMethod,
    seed: u64,
) -> Result<BinProbabilityVector> {
    let sampler = BinProbabilitySampler::new(target_probs, n)?;
    let mut rng = substream(seed, Domain::BinProbabilities, 0);
    Ok(sampler.sample(method, &mut rng))
}
