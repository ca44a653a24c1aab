use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdTable;
use crate::datagen::PreparedSpec;
use crate::detector::{BatchDetector, BatchThreshold, DetectorConfig, QtEwma, StatisticTracker, StreamMonitor};
use crate::error::{Error, Result};
use crate::quanttree::QuantTreePartition;
use crate::rng::{derive_seed, substream, Domain};
use crate::scalar::{Precision, Scalar};
use crate::stats::{auc, stratified_bootstrap_interval};

use super::records::{arl0_estimate, delay_far, Arl0Estimate, DelayFar, RunRecord};

/// The online monitor applied to every stream.
#[derive(Debug, Clone, Copy)]
pub enum MonitorSpec<'a> {
    QtEwma {
        config: DetectorConfig,
        table: &'a ThresholdTable,
    },
    Batch {
        threshold: &'a BatchThreshold,
    },
}

/// A family of runs: each gets a fresh training set, partition and stream
/// from its own substreams of `seed`.
#[derive(Debug, Clone, Copy)]
pub struct RunPlan<'a> {
    pub stream: &'a PreparedSpec,
    pub n_train: usize,
    pub target_probs: &'a [f64],
    pub runs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl RunPlan<'_> {
    pub fn run_seed(&self, run: u64) -> u64 {
        derive_seed(self.seed, Domain::Run, run)
    }
}

fn convert<F: Scalar>(rows: &[Vec<f64>]) -> Vec<Vec<F>> {
    rows.iter().map(|r| r.iter().map(|&v| F::of(v)).collect()).collect()
}

fn build_partition<F: Scalar>(training: &[Vec<f64>], target_probs: &[f64], run_seed: u64) -> Result<QuantTreePartition<F>> {
    QuantTreePartition::build(
        &convert::<F>(training),
        target_probs,
        derive_seed(run_seed, Domain::Partition, 0),
    )
}

fn run_one<F: Scalar>(plan: &RunPlan, monitor: MonitorSpec, run: u64) -> Result<RunRecord> {
    let seed = plan.run_seed(run);
    let scenario = plan.stream.realize(seed, plan.n_train)?;
    let partition = build_partition::<F>(&scenario.training, plan.target_probs, seed)?;
    let mut boxed: Box<dyn StreamMonitor<F> + '_> = match monitor {
        MonitorSpec::QtEwma { config, table } => Box::new(QtEwma::new(&partition, &config, table)?),
        MonitorSpec::Batch { threshold } => Box::new(BatchDetector::new(&partition, threshold)?),
    };
    let mut stream = scenario.stream;
    let mut x = vec![0.0; plan.stream.dim()];
    let mut xf = vec![F::zero(); plan.stream.dim()];
    let mut samples = 0;
    let mut t_star = None;
    while stream.fill_next(&mut x) {
        for (o, &v) in xf.iter_mut().zip(&x) {
            *o = F::of(v);
        }
        let obs = boxed.observe(&xf)?;
        samples += 1;
        if obs.detected {
            t_star = Some(obs.t);
            break;
        }
    }
    Ok(RunRecord::new(run, seed, t_star, plan.stream.tau(), samples))
}

/// Monitor `plan.runs` streams in parallel; records come back in run order
/// whatever the worker count.
pub fn run_many(plan: &RunPlan, monitor: MonitorSpec) -> Result<Vec<RunRecord>> {
    (0..plan.runs as u64)
        .into_par_iter()
        .map(|r| match plan.precision {
            Precision::F64 => run_one::<f64>(plan, monitor, r),
            Precision::F32 => run_one::<f32>(plan, monitor, r),
        })
        .collect()
}

/// Empirical ARL₀ over stationary streams.
pub fn measure_arl0(plan: &RunPlan, monitor: MonitorSpec) -> Result<(Vec<RunRecord>, Arl0Estimate)> {
    if plan.stream.tau().is_some() {
        return Err(Error::Config("ARL0 runs need a stationary stream".into()));
    }
    if plan.runs < super::MIN_ARL0_RUNS {
        return Err(Error::Config(format!(
            "at least {} runs needed for an ARL0 estimate, got {}",
            super::MIN_ARL0_RUNS,
            plan.runs
        )));
    }
    let records = run_many(plan, monitor)?;
    let est = arl0_estimate(&records)?;
    Ok((records, est))
}

/// Detection delay and false-alarm rate over streams with a change.
pub fn measure_delay_far(plan: &RunPlan, monitor: MonitorSpec) -> Result<(Vec<RunRecord>, DelayFar)> {
    if plan.stream.tau().is_none() {
        return Err(Error::Config("delay runs need a stream with a change point".into()));
    }
    let records = run_many(plan, monitor)?;
    let agg = delay_far(&records)?;
    Ok((records, agg))
}

/// AUC of `T_{τ+lag}` on changed versus stationary streams, for several
/// detectors sharing each run's partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucStudy {
    pub tau: u64,
    pub lags: Vec<u64>,
    /// Lags dropped because `τ + lag` is past the end of a stream.
    pub skipped: Vec<u64>,
    pub detectors: Vec<DetectorConfig>,
    /// `auc[detector][lag]`.
    pub auc: Vec<Vec<f64>>,
    /// Statistic values `[detector][lag][run]` on changed streams.
    pub positive: Vec<Vec<Vec<f64>>>,
    /// The same on stationary streams.
    pub negative: Vec<Vec<Vec<f64>>>,
}

impl AucStudy {
    /// Bootstrap interval of `AUC(a) − AUC(b)` at `lags[lag]`, resampling
    /// changed and stationary runs (paired across detectors).
    pub fn difference_interval(&self, a: usize, b: usize, lag: usize, resamples: usize, level: f64, seed: u64) -> (f64, f64) {
        let (pa, pb) = (&self.positive[a][lag], &self.positive[b][lag]);
        let (na, nb) = (&self.negative[a][lag], &self.negative[b][lag]);
        let mut rng = substream(seed, Domain::Bootstrap, 0);
        stratified_bootstrap_interval(&[pa.len(), na.len()], resamples, level, &mut rng, |idx| {
            let pick = |v: &[f64], ix: &[usize]| ix.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let (pos, neg) = (&idx[0], &idx[1]);
            auc(&pick(pa, pos), &pick(na, neg)) - auc(&pick(pb, pos), &pick(nb, neg))
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn statistics_at<F: Scalar>(
    stream: &PreparedSpec,
    detectors: &[DetectorConfig],
    times: &[u64],
    n_train: usize,
    target_probs: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let scenario = stream.realize(seed, n_train)?;
    let partition = build_partition::<F>(&scenario.training, target_probs, seed)?;
    let mut trackers = detectors
        .iter()
        .map(|c| StatisticTracker::new(&partition, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![vec![0.0; times.len()]; detectors.len()];
    let last = times.iter().copied().max().unwrap_or(0);
    let mut stream = scenario.stream;
    let mut x = vec![0.0; stream.dim()];
    let mut xf = vec![F::zero(); stream.dim()];
    let mut t = 0;
    while t < last && stream.fill_next(&mut x) {
        t += 1;
        for (o, &v) in xf.iter_mut().zip(&x) {
            *o = F::of(v);
        }
        let bin = partition.lookup(&xf)?;
        for (d, tracker) in trackers.iter_mut().enumerate() {
            let s = tracker.step_bin(bin);
            for (i, _) in times.iter().enumerate().filter(|(_, &at)| at == t) {
                out[d][i] = s.widen();
            }
        }
    }
    Ok(out)
}

/// Run every detector on `runs` changed and `runs` stationary streams and
/// compute the Mann–Whitney AUC of the statistic at each lag after `τ`.
#[allow(clippy::too_many_arguments)]
pub fn auc_by_lag(
    detectors: &[DetectorConfig],
    stationary: &PreparedSpec,
    changed: &PreparedSpec,
    lags: &[u64],
    n_train: usize,
    target_probs: &[f64],
    runs: usize,
    seed: u64,
    precision: Precision,
) -> Result<AucStudy> {
    let tau = changed
        .tau()
        .ok_or_else(|| Error::Config("AUC study needs a stream with a change point".into()))?;
    if stationary.tau().is_some() {
        return Err(Error::Config("AUC reference streams must be stationary".into()));
    }
    if runs == 0 {
        return Err(Error::Config("AUC study needs at least one run per class".into()));
    }
    let horizon = changed.length().min(stationary.length()) as u64;
    let (kept, skipped): (Vec<u64>, Vec<u64>) = lags.iter().partition(|&&l| tau + l <= horizon);
    for l in &skipped {
        log::warn!("lag {l} skipped: tau + lag beyond stream length {horizon}");
    }
    let times: Vec<u64> = kept.iter().map(|l| tau + l).collect();
    let class = |spec: &PreparedSpec, class: u64| -> Result<Vec<Vec<Vec<f64>>>> {
        let base = derive_seed(seed, Domain::Run, class);
        let per_run: Vec<Vec<Vec<f64>>> = (0..runs as u64)
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(base, Domain::Run, r);
                match precision {
                    Precision::F64 => statistics_at::<f64>(spec, detectors, &times, n_train, target_probs, s),
                    Precision::F32 => statistics_at::<f32>(spec, detectors, &times, n_train, target_probs, s),
                }
            })
            .collect::<Result<_>>()?;
        // [run][det][lag] -> [det][lag][run]
        Ok((0..detectors.len())
            .map(|d| (0..times.len()).map(|l| per_run.iter().map(|r| r[d][l]).collect()).collect())
            .collect())
    };
    let positive = class(changed, 0)?;
    let negative = class(stationary, 1)?;
    let auc = (0..detectors.len())
        .map(|d| (0..times.len()).map(|l| auc(&positive[d][l], &negative[d][l])).collect())
        .collect();
    Ok(AucStudy {
        tau,
        lags: kept,
        skipped,
        detectors: detectors.to_vec(),
        auc,
        positive,
        negative,
    })
}
