use rand::Rng as _;
use rayon::prelude::*;

use crate::detector::{DetectorConfig, EwmaParams};
use crate::error::{Error, Result};
use crate::quanttree::{pi_tilde, BinProbabilitySampler};
use crate::rng::{substream, Domain, Rng};
use crate::scalar::Scalar;

use super::quantile::{upper_quantile, RawSeries, RawThreshold};
use super::MIN_REPLICATES;

/// What to simulate: the detector and the partition shape it will run on.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub detector: DetectorConfig,
    pub target_probs: Vec<f64>,
    pub n_train: usize,
    pub replicates: usize,
    pub length: usize,
    pub seed: u64,
}

impl SimulationSpec {
    fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "at least {MIN_REPLICATES} replicates required, got {}",
                self.replicates
            )));
        }
        if self.replicates < 10 * MIN_REPLICATES {
            log::warn!(
                "{} replicates: tail thresholds will be noisy",
                self.replicates
            );
        }
        if self.length == 0 {
            return Err(Error::Config("simulated length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Replicate-major statistic paths `T_1..T_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticPaths<F> {
    replicates: usize,
    length: usize,
    values: Vec<F>,
}

impl<F: Scalar> StatisticPaths<F> {
    pub fn from_values(replicates: usize, length: usize, values: Vec<F>) -> Self {
        assert_eq!(values.len(), replicates * length);
        StatisticPaths { replicates, length, values }
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn path(&self, i: usize) -> &[F] {
        &self.values[i * self.length..(i + 1) * self.length]
    }
}

/// One simulated stream: its own random stream, its bin probabilities (as a
/// cumulative table) and the detector state.
struct Replicate<F> {
    rng: Rng,
    cumulative: Vec<f64>,
    z: Vec<F>,
    p_hat: Vec<F>,
    t: u64,
    alive: bool,
}

impl<F: Scalar> Replicate<F> {
    fn new(seed: u64, index: usize, sampler: &BinProbabilitySampler, reference: &[F]) -> Self {
        let mut rng = substream(seed, Domain::Calibration, index as u64);
        let k = reference.len();
        let mut cumulative = vec![0.0; k];
        sampler.fill_dirichlet(&mut rng, &mut cumulative);
        for j in 1..k {
            cumulative[j] += cumulative[j - 1];
        }
        cumulative[k - 1] = 1.0;
        Replicate {
            rng,
            cumulative,
            z: reference.to_vec(),
            p_hat: reference.to_vec(),
            t: 0,
            alive: true,
        }
    }

    /// Draw the next one-hot bin vector and advance the detector recursion.
    #[inline]
    fn advance(&mut self, params: &EwmaParams<F>) -> F {
        let u: f64 = self.rng.random();
        let bin = self.cumulative.partition_point(|&c| c <= u);
        self.t += 1;
        params.step(self.t, &mut self.z, &mut self.p_hat, bin)
    }
}

struct Prepared<F> {
    params: EwmaParams<F>,
    sampler: BinProbabilitySampler,
    reference: Vec<F>,
}

fn prepare<F: Scalar>(spec: &SimulationSpec) -> Result<Prepared<F>> {
    spec.validate()?;
    Ok(Prepared {
        params: EwmaParams::new(&spec.detector, spec.n_train),
        sampler: BinProbabilitySampler::new(&spec.target_probs, spec.n_train)?,
        reference: pi_tilde(&spec.target_probs, spec.n_train)
            .into_iter()
            .map(F::of)
            .collect(),
    })
}

/// Materialize all `R × L` statistic values. Refuses when the paths would
/// exceed `memory_budget` bytes; use [`streaming_thresholds`] instead.
pub fn simulate_statistic_paths<F: Scalar>(
    spec: &SimulationSpec,
    memory_budget: u64,
) -> Result<StatisticPaths<F>> {
    let prep = prepare::<F>(spec)?;
    let needed = (spec.replicates as u64)
        .saturating_mul(spec.length as u64)
        .saturating_mul(std::mem::size_of::<F>() as u64);
    if needed > memory_budget {
        return Err(Error::MemoryBudget {
            needed,
            budget: memory_budget,
        });
    }
    let mut values = vec![F::zero(); spec.replicates * spec.length];
    values
        .par_chunks_mut(spec.length)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rep = Replicate::new(spec.seed, i, &prep.sampler, &prep.reference);
            for v in row.iter_mut() {
                *v = rep.advance(&prep.params);
            }
        });
    Ok(StatisticPaths::from_values(spec.replicates, spec.length, values))
}

/// Conditional-quantile thresholds without storing paths.
///
/// All replicates advance one step at a time; once a replicate exceeds a
/// threshold it can never influence a later quantile, so it is dropped. The
/// result equals [`conditional_quantile_thresholds`] over the materialized
/// paths of the same spec, bit for bit, and costs about `R/α` steps instead
/// of `R·L`.
///
/// [`conditional_quantile_thresholds`]: super::conditional_quantile_thresholds
pub fn streaming_thresholds<F: Scalar>(
    spec: &SimulationSpec,
    alpha: f64,
    survivor_floor: usize,
) -> Result<RawSeries> {
    let prep = prepare::<F>(spec)?;
    let mut pool: Vec<Replicate<F>> = (0..spec.replicates)
        .into_par_iter()
        .map(|i| Replicate::new(spec.seed, i, &prep.sampler, &prep.reference))
        .collect();
    let mut stats: Vec<F> = vec![F::zero(); pool.len()];
    let mut alive = pool.len();
    let mut scratch: Vec<f64> = Vec::with_capacity(alive);
    let mut points = Vec::with_capacity(spec.length);
    let mut truncated_at = None;

    for t in 1..=spec.length as u64 {
        if alive < survivor_floor.max(1) {
            log::warn!("only {alive} surviving replicates at t={t}; raw thresholds truncated");
            truncated_at = Some(t);
            break;
        }
        pool.par_iter_mut()
            .zip(stats.par_iter_mut())
            .with_min_len(512)
            .for_each(|(rep, s)| {
                if rep.alive {
                    *s = rep.advance(&prep.params);
                }
            });
        scratch.clear();
        scratch.extend(
            pool.iter()
                .zip(&stats)
                .filter(|(r, _)| r.alive)
                .map(|(_, s)| s.widen()),
        );
        let h = upper_quantile(&mut scratch, alpha);
        points.push(RawThreshold {
            t,
            h,
            survivors: alive as u64,
        });
        for (rep, s) in pool.iter_mut().zip(&stats) {
            if rep.alive && s.widen() > h {
                rep.alive = false;
                alive -= 1;
            }
        }
        if alive * 4 < pool.len() * 3 {
            let mut keep = pool.iter().map(|r| r.alive);
            stats.retain(|_| keep.next().unwrap_or(false));
            pool.retain(|r| r.alive);
        }
    }
    Ok(RawSeries { points, truncated_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::conditional_quantile_thresholds;
    use crate::quanttree::uniform_probs;

    fn spec(beta: Option<f64>, stop_at: Option<u64>) -> SimulationSpec {
        SimulationSpec {
            detector: DetectorConfig { lambda: 0.05, beta, stop_at },
            target_probs: uniform_probs(4),
            n_train: 32,
            replicates: MIN_REPLICATES,
            length: 60,
            seed: 17,
        }
    }

    #[test]
    fn paths_are_nonnegative() {
        let paths = simulate_statistic_paths::<f64>(&spec(Some(5.0), None), u64::MAX).unwrap();
        assert!(paths.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn streaming_equals_materialized() {
        for s in [spec(None, None), spec(Some(2.0), Some(60))] {
            let paths = simulate_statistic_paths::<f64>(&s, u64::MAX).unwrap();
            let a = conditional_quantile_thresholds(&paths, 0.01, 20);
            let b = streaming_thresholds::<f64>(&s, 0.01, 20).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn memory_guard() {
        let s = spec(None, None);
        assert!(matches!(
            simulate_statistic_paths::<f64>(&s, 1000),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn too_few_replicates() {
        let mut s = spec(None, None);
        s.replicates = 100;
        assert!(simulate_statistic_paths::<f64>(&s, u64::MAX).is_err());
    }

    #[test]
    fn ewma_mean_tracks_pi_tilde() {
        // E[Z_t] = E[p] = π̃ at every t, by the law of total expectation.
        let s = SimulationSpec {
            target_probs: vec![0.1, 0.2, 0.3, 0.4],
            ..spec(None, None)
        };
        let prep = prepare::<f64>(&s).unwrap();
        let reps = s.replicates;
        let mut mean = [0.0; 4];
        let mut sq = [0.0; 4];
        for i in 0..reps {
            let mut r = Replicate::new(s.seed, i, &prep.sampler, &prep.reference);
            for _ in 0..200 {
                r.advance(&prep.params);
            }
            assert!((r.z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..4 {
                mean[j] += r.z[j];
                sq[j] += r.z[j] * r.z[j];
            }
        }
        for j in 0..4 {
            let m = mean[j] / reps as f64;
            let var = sq[j] / reps as f64 - m * m;
            let se = (var / reps as f64).sqrt();
            assert!((m - prep.reference[j]).abs() < 3.0 * se + 1e-12, "bin {j}: {m} vs {}", prep.reference[j]);
        }
    }

    #[test]
    fn one_hot_draws() {
        let s = spec(None, None);
        let prep = prepare::<f64>(&s).unwrap();
        let mut r = Replicate::new(s.seed, 0, &prep.sampler, &prep.reference);
        for _ in 0..1000 {
            let before = r.z.clone();
            r.advance(&prep.params);
            // Exactly one bin received the λ increment.
            let bumped = r
                .z
                .iter()
                .zip(&before)
                .filter(|(a, b)| (**a - 0.95 * **b) > 0.04)
                .count();
            assert_eq!(bumped, 1);
        }
    }
}
