use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdTable;
use crate::error::{Error, Result};
use crate::quanttree::QuantTreePartition;
use crate::scalar::Scalar;

use super::ewma::EwmaParams;
use super::run::{Observation, StreamMonitor};

/// Detector settings. Together with the partition's `(K, π, N)` these are
/// the identity of a threshold table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// EWMA forgetting factor in (0, 1).
    pub lambda: f64,
    /// Updating-speed divisor. `None` freezes the bin probabilities at `π̃`
    /// (plain QT-EWMA); `Some(β)` adapts them with weight `1/(β(N+t))`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Total sample budget `S` after which adaptation freezes (`N + t >= S`).
    #[serde(default)]
    pub stop_at: Option<u64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            lambda: 0.03,
            beta: None,
            stop_at: None,
        }
    }
}

impl DetectorConfig {
    pub fn plain(lambda: f64) -> Self {
        DetectorConfig { lambda, beta: None, stop_at: None }
    }

    pub fn updating(lambda: f64, beta: f64, stop_at: Option<u64>) -> Self {
        DetectorConfig { lambda, beta: Some(beta), stop_at }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0,1), got {}", self.lambda)));
        }
        if let Some(beta) = self.beta {
            if beta.is_nan() || beta < 1.0 {
                return Err(Error::Config(format!("beta must be >= 1, got {beta}")));
            }
        }
        if self.stop_at == Some(0) {
            return Err(Error::Config("stop_at must be positive".into()));
        }
        Ok(())
    }

    /// `"qt-ewma"` when the estimates never move, `"qt-ewma-update"` otherwise.
    pub fn variant(&self) -> &'static str {
        match self.beta {
            Some(b) if b.is_finite() => "qt-ewma-update",
            _ => "qt-ewma",
        }
    }

    /// β with `∞` written as `None`.
    pub fn effective_beta(&self) -> Option<f64> {
        self.beta.filter(|b| b.is_finite())
    }
}

/// Per-stream monitoring state after `t` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState<F> {
    pub z: Vec<F>,
    pub p_hat: Vec<F>,
    pub t: u64,
}

impl<F: Scalar> DetectorState<F> {
    fn start(pi_tilde: &[F]) -> Self {
        DetectorState {
            z: pi_tilde.to_vec(),
            p_hat: pi_tilde.to_vec(),
            t: 0,
        }
    }
}

/// The statistic sequence alone, without thresholds. Used for AUC studies
/// and as the engine inside [`QtEwma`].
#[derive(Debug, Clone)]
pub struct StatisticTracker<'p, F: Scalar> {
    partition: &'p QuantTreePartition<F>,
    config: DetectorConfig,
    params: EwmaParams<F>,
    state: DetectorState<F>,
}

impl<'p, F: Scalar> StatisticTracker<'p, F> {
    pub fn new(partition: &'p QuantTreePartition<F>, config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(StatisticTracker {
            partition,
            config: *config,
            params: EwmaParams::new(config, partition.n_train()),
            state: DetectorState::start(partition.pi_tilde()),
        })
    }

    /// Consume one sample and return `T_t`.
    #[inline]
    pub fn step(&mut self, x: &[F]) -> Result<F> {
        let bin = self.partition.lookup(x)?;
        Ok(self.step_bin(bin))
    }

    #[inline]
    pub fn step_bin(&mut self, bin: usize) -> F {
        self.state.t += 1;
        let t = self.state.t;
        self.params
            .step(t, &mut self.state.z, &mut self.state.p_hat, bin)
    }

    pub fn state(&self) -> &DetectorState<F> {
        &self.state
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn partition(&self) -> &'p QuantTreePartition<F> {
        self.partition
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<F> {
    pub t: u64,
    pub statistic: F,
    pub threshold: f64,
    pub detected: bool,
}

/// QT-EWMA / QT-EWMA-update detector. Halts at the first detection.
#[derive(Debug, Clone)]
pub struct QtEwma<'p, F: Scalar> {
    tracker: StatisticTracker<'p, F>,
    thresholds: &'p ThresholdTable,
    detected_at: Option<u64>,
}

impl<'p, F: Scalar> QtEwma<'p, F> {
    /// Refuses a table calibrated for a different `(λ, K, π, N, β, S)`.
    pub fn new(
        partition: &'p QuantTreePartition<F>,
        config: &DetectorConfig,
        thresholds: &'p ThresholdTable,
    ) -> Result<Self> {
        thresholds.check_compatible(config, partition.target_probs(), partition.n_train())?;
        Ok(QtEwma {
            tracker: StatisticTracker::new(partition, config)?,
            thresholds,
            detected_at: None,
        })
    }

    pub fn step(&mut self, x: &[F]) -> Result<StepOutcome<F>> {
        if let Some(t) = self.detected_at {
            return Err(Error::MonitoringHalted(t));
        }
        let statistic = self.tracker.step(x)?;
        let t = self.tracker.state().t;
        let threshold = self.thresholds.threshold(t);
        let detected = statistic > F::of(threshold);
        if detected {
            self.detected_at = Some(t);
        }
        Ok(StepOutcome { t, statistic, threshold, detected })
    }

    pub fn state(&self) -> &DetectorState<F> {
        self.tracker.state()
    }

    pub fn detected_at(&self) -> Option<u64> {
        self.detected_at
    }
}

impl<F: Scalar> StreamMonitor<F> for QtEwma<'_, F> {
    fn observe(&mut self, x: &[F]) -> Result<Observation> {
        let s = self.step(x)?;
        Ok(Observation {
            t: s.t,
            statistic: Some(s.statistic.widen()),
            threshold: Some(s.threshold),
            detected: s.detected,
        })
    }
}
