use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi_square_gof, mean_se, TestResult};

/// Fewest runs for which an ARL₀ interval is reported.
pub const MIN_ARL0_RUNS: usize = 100;

/// One monitored stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub seed: u64,
    /// Detection time; absent when the stream ended first.
    pub t_star: Option<u64>,
    pub tau: Option<u64>,
    /// Samples monitored, which is the stream length when nothing fired.
    pub samples: u64,
    pub false_alarm: bool,
}

impl RunRecord {
    pub fn new(run: u64, seed: u64, t_star: Option<u64>, tau: Option<u64>, samples: u64) -> Self {
        let false_alarm = match (t_star, tau) {
            (Some(t), Some(tau)) => t < tau,
            (Some(_), None) => true,
            (None, _) => false,
        };
        RunRecord {
            run,
            seed,
            t_star,
            tau,
            samples,
            false_alarm,
        }
    }
}

/// Empirical ARL₀ of stationary runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arl0Estimate {
    pub runs: usize,
    pub detections: usize,
    /// Runs that ended without a detection (right-censored).
    pub censored: usize,
    /// Total monitored time over detections: the exponential/geometric
    /// maximum-likelihood estimate under right censoring.
    pub arl0: f64,
    pub arl0_se: f64,
    /// 95% normal interval around `arl0`.
    pub ci: (f64, f64),
    /// Plain mean of the observed detection times.
    pub mean_detected: f64,
}

/// Aggregate stationary runs. Refuses fewer than [`MIN_ARL0_RUNS`].
pub fn arl0_estimate(records: &[RunRecord]) -> Result<Arl0Estimate> {
    if records.len() < MIN_ARL0_RUNS {
        return Err(Error::Config(format!(
            "at least {MIN_ARL0_RUNS} runs needed for an ARL0 estimate, got {}",
            records.len()
        )));
    }
    let detected: Vec<f64> = records.iter().filter_map(|r| r.t_star).map(|t| t as f64).collect();
    let detections = detected.len();
    let censored = records.len() - detections;
    let exposure: f64 = records.iter().map(|r| r.t_star.unwrap_or(r.samples) as f64).sum();
    let (arl0, arl0_se) = if detections == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let est = exposure / detections as f64;
        (est, est / (detections as f64).sqrt())
    };
    let mean_detected = if detections > 1 { mean_se(&detected).0 } else { detected.first().copied().unwrap_or(f64::NAN) };
    Ok(Arl0Estimate {
        runs: records.len(),
        detections,
        censored,
        arl0,
        arl0_se,
        ci: (arl0 - 1.96 * arl0_se, arl0 + 1.96 * arl0_se),
        mean_detected,
    })
}

/// Detection delay and false-alarm rate of runs with a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayFar {
    pub runs: usize,
    pub false_alarms: usize,
    pub false_alarm_rate: f64,
    /// Mean of `t* − τ` over runs with `t* >= τ`; absent when there are none.
    pub arl1: Option<f64>,
    pub arl1_se: Option<f64>,
    /// Runs with no detection at all.
    pub censored: usize,
}

pub fn delay_far(records: &[RunRecord]) -> Result<DelayFar> {
    if records.is_empty() {
        return Err(Error::Config("no runs to aggregate".into()));
    }
    let mut delays = Vec::new();
    let mut false_alarms = 0;
    let mut censored = 0;
    for r in records {
        let tau = r
            .tau
            .ok_or_else(|| Error::Config(format!("run {} has no change point", r.run)))?;
        match r.t_star {
            None => censored += 1,
            Some(t) if t < tau => false_alarms += 1,
            Some(t) => delays.push((t - tau) as f64),
        }
    }
    let (arl1, arl1_se) = match delays.len() {
        0 => (None, None),
        1 => (Some(delays[0]), None),
        _ => {
            let (m, se) = mean_se(&delays);
            (Some(m), Some(se))
        }
    };
    Ok(DelayFar {
        runs: records.len(),
        false_alarms,
        false_alarm_rate: false_alarms as f64 / records.len() as f64,
        arl1,
        arl1_se,
        censored,
    })
}

/// Delays `t* − τ` of runs that detected at or after the change.
pub fn delays(records: &[RunRecord]) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| match (r.t_star, r.tau) {
            (Some(t), Some(tau)) if t >= tau => Some((t - tau) as f64),
            _ => None,
        })
        .collect()
}

/// Probability of an alarm within the first `t` samples when the per-step
/// hazard is `alpha`: `1 − (1 − α)^t`. A false alarm before a change at
/// `τ` means `t = τ − 1`.
pub fn expected_false_alarm_rate(alpha: f64, t: u64) -> f64 {
    1.0 - (1.0 - alpha).powf(t as f64)
}

/// Chi-square goodness of fit of detection times against `Geometric(α)` on
/// `{1, 2, …}`, censored at `length`.
///
/// Cells are `cells` near-equiprobable intervals of the uncensored range
/// plus one cell for censored runs; small cells are merged until every
/// expected count is at least 5.
pub fn geometric_gof(t_stars: &[Option<u64>], alpha: f64, length: u64, cells: usize) -> TestResult {
    let n = t_stars.len() as f64;
    let survival = |t: u64| (1.0 - alpha).powf(t as f64);
    // Upper edges e with P(t* <= e) ≈ i / cells of the detected mass.
    let detected_mass = 1.0 - survival(length);
    let mut edges: Vec<u64> = (1..cells)
        .map(|i| {
            let q = detected_mass * i as f64 / cells as f64;
            ((1.0 - q).ln() / (1.0 - alpha).ln()).ceil() as u64
        })
        .filter(|&e| e >= 1 && e < length)
        .collect();
    edges.push(length);
    edges.dedup();

    let mut expected = Vec::new();
    let mut lower = 0;
    for &e in &edges {
        expected.push(n * (survival(lower) - survival(e)));
        lower = e;
    }
    expected.push(n * survival(length));
    let mut observed = vec![0.0; expected.len()];
    for t in t_stars {
        let cell = match t {
            Some(t) if *t <= length => edges.partition_point(|&e| e < *t),
            _ => edges.len(),
        };
        observed[cell] += 1.0;
    }
    let (observed, expected) = merge_small(observed, expected, 5.0);
    chi_square_gof(&observed, &expected, 0)
}

fn merge_small(observed: Vec<f64>, expected: Vec<f64>, min: f64) -> (Vec<f64>, Vec<f64>) {
    let mut o = Vec::new();
    let mut e = Vec::new();
    let (mut acc_o, mut acc_e) = (0.0, 0.0);
    for (ob, ex) in observed.into_iter().zip(expected) {
        acc_o += ob;
        acc_e += ex;
        if acc_e >= min {
            o.push(acc_o);
            e.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        match e.last_mut() {
            Some(last) => {
                *last += acc_e;
                *o.last_mut().unwrap() += acc_o;
            }
            None => {
                o.push(acc_o);
                e.push(acc_e);
            }
        }
    }
    (o, e)
}
