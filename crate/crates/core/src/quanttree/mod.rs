//! QuantTree histograms.
//!
//! A QuantTree partition splits ℝᵈ into `K` bins by a sequence of axis-aligned
//! tail cuts fitted on a training set, so that bin `j` holds a prescribed number
//! of training points. Under a continuous data law the vector of true bin masses
//! is Dirichlet distributed with parameters `(π₁N, …, π_{K-1}N, π_KN + 1)`
//! whatever the law and the dimension; [`sampler`] draws from that law directly.

mod partition;
pub mod sampler;

pub use partition::{allocate_counts, pi_tilde, validate_target_probs, Cut, Direction, QuantTreePartition};
pub use sampler::{dirichlet_params, sample_bin_probabilities, BinProbabilitySampler, BinProbabilityVector, SamplerMethod};

/// Uniform target probabilities `1/K`.
pub fn uniform_probs(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}
