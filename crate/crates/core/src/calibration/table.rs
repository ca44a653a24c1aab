use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::quanttree::validate_target_probs;
use crate::scalar::Precision;

use super::poly::{self, fit_threshold_polynomial};
use super::quantile::{conditional_quantile_thresholds, RawSeries, RawThreshold};
use super::simulate::{simulate_statistic_paths, streaming_thresholds, SimulationSpec};

const FORMAT: &str = "qtewma-threshold-table";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Keep only live replicate states; exact and `O(R·K)` memory.
    #[default]
    Streaming,
    /// Store every path, subject to the memory budget.
    Materialized,
}

/// How `h_t` is read off a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Raw conditional quantiles while at least `1/α` replicates survive,
    /// the fitted polynomial afterwards.
    #[default]
    Hybrid,
    /// The fitted polynomial for every `t`.
    Polynomial,
}

/// Everything that determines a threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub detector: DetectorConfig,
    pub target_probs: Vec<f64>,
    pub n_train: usize,
    pub arl0: f64,
    pub replicates: usize,
    pub length: usize,
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_floor")]
    pub survivor_floor: usize,
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default = "default_budget")]
    pub memory_budget: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub source: ThresholdSource,
}

fn default_degree() -> usize {
    7
}

fn default_floor() -> usize {
    20
}

fn default_budget() -> u64 {
    2 << 30
}

impl CalibrationConfig {
    /// Desk-scale defaults: 10⁵ replicates of length 5000.
    pub fn new(detector: DetectorConfig, target_probs: Vec<f64>, n_train: usize, arl0: f64) -> Self {
        CalibrationConfig {
            detector,
            target_probs,
            n_train,
            arl0,
            replicates: 100_000,
            length: 5000,
            seed: 0,
            degree: default_degree(),
            survivor_floor: default_floor(),
            mode: SimulationMode::Streaming,
            memory_budget: default_budget(),
            precision: Precision::F64,
            source: ThresholdSource::Hybrid,
        }
    }

    /// 10⁶ replicates.
    pub fn full_scale(mut self) -> Self {
        self.replicates = 1_000_000;
        self
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.arl0
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        validate_target_probs(&self.target_probs)?;
        if self.n_train < self.target_probs.len() {
            return Err(Error::Config(format!(
                "training size {} smaller than bin count {}",
                self.n_train,
                self.target_probs.len()
            )));
        }
        if !(self.arl0 > 2.0) || !self.arl0.is_finite() {
            return Err(Error::Config(format!("ARL0 must exceed 2, got {}", self.arl0)));
        }
        Ok(())
    }

    fn simulation(&self) -> SimulationSpec {
        SimulationSpec {
            detector: self.detector,
            target_probs: self.target_probs.clone(),
            n_train: self.n_train,
            replicates: self.replicates,
            length: self.length,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMeta {
    pub calibration: CalibrationConfig,
    pub k: usize,
    /// Exactly `1 / arl0`.
    pub alpha: f64,
    pub variant: String,
    pub fit_rms: f64,
    pub truncated_at: Option<u64>,
    /// Raw thresholds are used for `t <= raw_horizon` under
    /// [`ThresholdSource::Hybrid`].
    pub raw_horizon: u64,
}

/// Calibrated thresholds `{h_t}` for one detector configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    meta: TableMeta,
    raw: Vec<RawThreshold>,
    poly: Vec<f64>,
}

/// Simulate, take conditional quantiles, fit the `1/t` polynomial.
pub fn calibrate(config: &CalibrationConfig) -> Result<ThresholdTable> {
    config.validate()?;
    let alpha = config.alpha();
    let spec = config.simulation();
    let raw: RawSeries = match (config.mode, config.precision) {
        (SimulationMode::Streaming, Precision::F64) => {
            streaming_thresholds::<f64>(&spec, alpha, config.survivor_floor)?
        }
        (SimulationMode::Streaming, Precision::F32) => {
            streaming_thresholds::<f32>(&spec, alpha, config.survivor_floor)?
        }
        (SimulationMode::Materialized, Precision::F64) => conditional_quantile_thresholds(
            &simulate_statistic_paths::<f64>(&spec, config.memory_budget)?,
            alpha,
            config.survivor_floor,
        ),
        (SimulationMode::Materialized, Precision::F32) => conditional_quantile_thresholds(
            &simulate_statistic_paths::<f32>(&spec, config.memory_budget)?,
            alpha,
            config.survivor_floor,
        ),
    };
    ThresholdTable::from_raw(config.clone(), raw)
}

impl ThresholdTable {
    /// Assemble a table from raw conditional quantiles.
    pub fn from_raw(config: CalibrationConfig, raw: RawSeries) -> Result<Self> {
        let alpha = config.alpha();
        let raw_horizon = raw
            .points
            .iter()
            .take_while(|p| p.survivors as f64 * alpha >= 1.0)
            .count();
        // Past the horizon no replicate is above the quantile, so `h_t` is a
        // running maximum, not an α-quantile. Keep those points out of the fit.
        let fitted = if raw_horizon > config.degree {
            &raw.points[..raw_horizon]
        } else {
            &raw.points[..]
        };
        let fit = fit_threshold_polynomial(fitted, config.degree)?;
        let raw_horizon = raw_horizon as u64;
        let meta = TableMeta {
            k: config.target_probs.len(),
            alpha,
            variant: config.detector.variant().to_string(),
            fit_rms: fit.rms,
            truncated_at: raw.truncated_at,
            raw_horizon,
            calibration: config,
        };
        Ok(ThresholdTable {
            meta,
            raw: raw.points,
            poly: fit.coefficients,
        })
    }

    /// `h_t` for `t >= 1`.
    pub fn threshold(&self, t: u64) -> f64 {
        match self.meta.calibration.source {
            ThresholdSource::Hybrid if t >= 1 && t <= self.meta.raw_horizon => {
                self.raw[(t - 1) as usize].h
            }
            _ => self.poly_threshold(t),
        }
    }

    /// The fitted polynomial at `t`.
    pub fn poly_threshold(&self, t: u64) -> f64 {
        poly::eval(&self.poly, t.max(1) as f64)
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn raw(&self) -> &[RawThreshold] {
        &self.raw
    }

    pub fn poly_coefficients(&self) -> &[f64] {
        &self.poly
    }

    pub fn alpha(&self) -> f64 {
        self.meta.alpha
    }

    /// Refuse to monitor with thresholds calibrated for another statistic.
    pub fn check_compatible(&self, detector: &DetectorConfig, target_probs: &[f64], n_train: usize) -> Result<()> {
        let cal = &self.meta.calibration;
        let mut diffs = Vec::new();
        if cal.detector.lambda != detector.lambda {
            diffs.push(format!("lambda {} vs {}", cal.detector.lambda, detector.lambda));
        }
        if cal.target_probs.as_slice() != target_probs {
            diffs.push(format!("K={} target probabilities vs K={}", cal.target_probs.len(), target_probs.len()));
        }
        if cal.n_train != n_train {
            diffs.push(format!("N {} vs {}", cal.n_train, n_train));
        }
        if cal.detector.effective_beta() != detector.effective_beta() {
            diffs.push(format!("beta {:?} vs {:?}", cal.detector.effective_beta(), detector.effective_beta()));
        }
        let stop = |d: &DetectorConfig| d.beta.and(d.stop_at);
        if stop(&cal.detector) != stop(detector) {
            diffs.push(format!("stop_at {:?} vs {:?}", stop(&cal.detector), stop(detector)));
        }
        if self.meta.variant != detector.variant() {
            diffs.push(format!("variant {} vs {}", self.meta.variant, detector.variant()));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::CalibrationMismatch(diffs.join(", ")))
        }
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            format: FORMAT.into(),
            version: VERSION,
            meta: self.meta.clone(),
            raw: self.raw.clone(),
            poly: PolyBlock {
                degree: self.poly.len() - 1,
                coefficients: self.poly.clone(),
            },
        };
        serde_json::to_string_pretty(&file).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        if file.poly.coefficients.len() != file.poly.degree + 1 {
            return Err(Error::Format("polynomial degree does not match coefficients".into()));
        }
        if (file.meta.raw_horizon as usize) > file.raw.len() {
            return Err(Error::Format("raw horizon beyond raw series".into()));
        }
        Ok(ThresholdTable {
            meta: file.meta,
            raw: file.raw,
            poly: file.poly.coefficients,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    #[cfg(test)]
    pub(crate) fn constant_for_tests(detector: &DetectorConfig, target_probs: &[f64], n_train: usize, h: f64) -> Self {
        let config = CalibrationConfig::new(*detector, target_probs.to_vec(), n_train, 100.0);
        let raw = (1..=10)
            .map(|t| RawThreshold { t, h, survivors: 1000 })
            .collect();
        ThresholdTable::from_raw(config, RawSeries { points: raw, truncated_at: None }).unwrap()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    format: String,
    version: u32,
    meta: TableMeta,
    raw: Vec<RawThreshold>,
    poly: PolyBlock,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyBlock {
    degree: usize,
    #[serde(with = "hexfloat::serde_vec")]
    coefficients: Vec<f64>,
}
