use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationConfig, TableMeta, ThresholdSource, ThresholdTable};
use crate::datagen::{PostChange, StreamSpec};
use crate::detector::{calibrate_batch_threshold, BatchThreshold, DetectorConfig};
use crate::error::{Error, Result};
use crate::quanttree::{uniform_probs, validate_target_probs};
use crate::scalar::Precision;

use super::records::{
    arl0_estimate, delay_far, expected_false_alarm_rate, geometric_gof, Arl0Estimate, RunRecord,
};
use super::runner::{auc_by_lag, measure_arl0, measure_delay_far, MonitorSpec, RunPlan};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default threshold-table cache directory.
pub const TABLE_CACHE_ENV: &str = "QTEWMA_TABLE_CACHE";

fn default_runs() -> usize {
    2000
}

fn default_k() -> usize {
    32
}

/// Where thresholds come from: a saved table, or a fresh calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub source: ThresholdSource,
}

fn default_replicates() -> usize {
    100_000
}

fn default_length() -> usize {
    5000
}

fn default_degree() -> usize {
    7
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings {
            table: None,
            replicates: default_replicates(),
            length: default_length(),
            seed: 0,
            degree: default_degree(),
            source: ThresholdSource::Hybrid,
        }
    }
}

/// Batch-wise Pearson baseline instead of QT-EWMA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSettings {
    pub nu: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

/// Compare detectors by the AUC of their statistic after the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucSettings {
    pub lags: Vec<u64>,
    /// Detectors evaluated alongside the main one.
    #[serde(default)]
    pub compare: Vec<DetectorConfig>,
}

/// An experiment: stream family, detector, thresholds and run count.
///
/// A stationary stream measures ARL₀; a stream with a change measures
/// delay and false-alarm rate; an `[auc]` block runs an AUC-by-lag study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub n_train: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_probs: Option<Vec<f64>>,
    #[serde(default)]
    pub precision: Precision,
    pub arl0: f64,
    #[serde(default)]
    pub detector: DetectorConfig,
    pub stream: StreamSpec,
    #[serde(default)]
    pub thresholds: ThresholdSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<AucSettings>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn target_probs(&self) -> Vec<f64> {
        self.target_probs.clone().unwrap_or_else(|| uniform_probs(self.k))
    }

    pub fn validate(&self) -> Result<()> {
        validate_target_probs(&self.target_probs())?;
        self.detector.validate()?;
        self.stream.validate()?;
        if let Some(auc) = &self.auc {
            if self.stream.change.is_none() {
                return Err(Error::Config("an AUC study needs a stream with a change".into()));
            }
            for c in &auc.compare {
                c.validate()?;
            }
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        Ok(())
    }

    /// The calibration that yields this experiment's QT-EWMA thresholds.
    pub fn calibration(&self) -> CalibrationConfig {
        let t = &self.thresholds;
        CalibrationConfig {
            replicates: t.replicates,
            length: t.length,
            seed: t.seed,
            degree: t.degree,
            precision: self.precision,
            source: t.source,
            ..CalibrationConfig::new(self.detector, self.target_probs(), self.n_train, self.arl0)
        }
    }

    fn deviations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(change) = &self.stream.change {
            match change.after {
                PostChange::MeanShift { skl } => out.push(format!(
                    "change is a Gaussian mean shift with exact sKL = {skl}, not a random roto-translation"
                )),
                PostChange::RandomShift { scale: None } => {
                    out.push("random shift scaled by the trace of the pre-change covariance".into())
                }
                _ => {}
            }
        }
        if self.batch.is_none() && self.auc.is_none() && self.thresholds.table.is_none() && self.thresholds.replicates < 1_000_000 {
            out.push(format!(
                "thresholds calibrated with {} replicates instead of 10^6",
                self.thresholds.replicates
            ));
        }
        if self.runs < 5000 {
            out.push(format!("{} runs instead of 5000", self.runs));
        }
        if self.batch.is_none() && self.auc.is_none() && self.thresholds.source == ThresholdSource::Hybrid {
            out.push("h_t read from raw conditional quantiles while at least 1/alpha replicates survive, polynomial after".into());
        }
        out
    }
}

/// One AUC value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucPoint {
    pub detector: String,
    pub beta: Option<f64>,
    pub lag: u64,
    pub auc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub empirical_arl0: Option<Arl0Estimate>,
    pub empirical_arl1: Option<f64>,
    pub arl1_se: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    /// `1 − (1 − 1/ARL₀)^(τ−1)`.
    pub expected_false_alarm_rate: Option<f64>,
    pub false_alarms: usize,
    pub censored: usize,
    /// Chi-square p-value of stationary detection times against the
    /// geometric law.
    pub geometric_p_value: Option<f64>,
    pub auc_by_lag: Vec<AucPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub config: ExperimentConfig,
    pub table: Option<TableMeta>,
    pub batch_threshold: Option<BatchThreshold>,
    pub runs: Vec<RunRecord>,
    pub aggregates: Aggregates,
    pub deviations: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: ExperimentReport = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Check the schema version and that the aggregates follow from the
    /// per-run records.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return bad(format!("unsupported report schema {}", self.schema_version));
        }
        for (i, r) in self.runs.iter().enumerate() {
            if r.run != i as u64 {
                return bad(format!("run records out of order at {i}"));
            }
            let expect = RunRecord::new(r.run, r.seed, r.t_star, r.tau, r.samples);
            if expect.false_alarm != r.false_alarm {
                return bad(format!("run {i}: inconsistent false-alarm flag"));
            }
        }
        let agg = &self.aggregates;
        if self.runs.iter().any(|r| r.tau.is_some()) {
            let recomputed = delay_far(&self.runs)?;
            if agg.false_alarm_rate != Some(recomputed.false_alarm_rate) || agg.empirical_arl1 != recomputed.arl1 {
                return bad("delay aggregates do not match run records".into());
            }
        } else if !self.runs.is_empty() {
            let recomputed = arl0_estimate(&self.runs)?;
            if agg.empirical_arl0.as_ref() != Some(&recomputed) {
                return bad("ARL0 aggregate does not match run records".into());
            }
        }
        Ok(())
    }
}

/// Content-addressed store of threshold tables.
#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TableCache { dir: dir.into() }
    }

    /// The directory named by [`TABLE_CACHE_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(TABLE_CACHE_ENV).map(Self::new)
    }

    pub fn path_for(&self, config: &CalibrationConfig) -> PathBuf {
        let json = serde_json::to_string(config).expect("config serializes");
        self.dir.join(format!("table-{:016x}.json", fnv1a(json.as_bytes())))
    }

    /// Load the table for `config`, calibrating and storing it on a miss.
    pub fn get_or_calibrate(&self, config: &CalibrationConfig) -> Result<ThresholdTable> {
        let path = self.path_for(config);
        if path.exists() {
            let table = ThresholdTable::load(&path)?;
            if table.meta().calibration == *config {
                return Ok(table);
            }
            log::warn!("{} holds a different calibration; recomputing", path.display());
        }
        let table = calibrate(config)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        table.save(&path)?;
        Ok(table)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn obtain_table(config: &ExperimentConfig) -> Result<ThresholdTable> {
    let cal = config.calibration();
    match (&config.thresholds.table, TableCache::from_env()) {
        (Some(path), _) => ThresholdTable::load(path),
        (None, Some(cache)) => cache.get_or_calibrate(&cal),
        (None, None) => calibrate(&cal),
    }
}

fn label(c: &DetectorConfig) -> String {
    match c.effective_beta() {
        Some(b) => match c.stop_at {
            Some(s) => format!("{}(beta={b},S={s})", c.variant()),
            None => format!("{}(beta={b})", c.variant()),
        },
        None => c.variant().to_string(),
    }
}

/// Run an experiment end to end. Identical configs give identical reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let probs = config.target_probs();
    let prepared = config.stream.prepare()?;
    let plan = RunPlan {
        stream: &prepared,
        n_train: config.n_train,
        target_probs: &probs,
        runs: config.runs,
        seed: config.seed,
        precision: config.precision,
    };
    let mut report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: config.name.clone(),
        config: config.clone(),
        table: None,
        batch_threshold: None,
        runs: Vec::new(),
        aggregates: Aggregates::default(),
        deviations: config.deviations(),
    };

    if let Some(auc) = &config.auc {
        let mut stationary = config.stream.clone();
        stationary.change = None;
        let stationary = stationary.prepare()?;
        let mut detectors = vec![config.detector];
        detectors.extend(auc.compare.iter().copied());
        let study = auc_by_lag(
            &detectors,
            &stationary,
            &prepared,
            &auc.lags,
            config.n_train,
            &probs,
            config.runs,
            config.seed,
            config.precision,
        )?;
        for (d, det) in study.detectors.iter().enumerate() {
            for (l, &lag) in study.lags.iter().enumerate() {
                report.aggregates.auc_by_lag.push(AucPoint {
                    detector: label(det),
                    beta: det.effective_beta(),
                    lag,
                    auc: study.auc[d][l],
                });
            }
        }
        for lag in study.skipped {
            report.deviations.push(format!("lag {lag} skipped: beyond stream length"));
        }
        return Ok(report);
    }

    let table;
    let batch;
    let monitor = match &config.batch {
        Some(b) => {
            batch = calibrate_batch_threshold(&probs, config.n_train, b.nu, config.arl0, b.replicates, config.thresholds.seed)?;
            report.batch_threshold = Some(batch.clone());
            MonitorSpec::Batch { threshold: &batch }
        }
        None => {
            table = obtain_table(config)?;
            report.table = Some(table.meta().clone());
            MonitorSpec::QtEwma {
                config: config.detector,
                table: &table,
            }
        }
    };

    let agg = &mut report.aggregates;
    match prepared.tau() {
        None => {
            let (records, est) = measure_arl0(&plan, monitor)?;
            let t_stars: Vec<Option<u64>> = records.iter().map(|r| r.t_star).collect();
            let alpha = match monitor {
                MonitorSpec::QtEwma { .. } => 1.0 / config.arl0,
                MonitorSpec::Batch { .. } => f64::NAN,
            };
            if alpha.is_finite() {
                agg.geometric_p_value = Some(geometric_gof(&t_stars, alpha, prepared.length() as u64, 20).p_value);
            }
            agg.censored = est.censored;
            agg.empirical_arl0 = Some(est);
            report.runs = records;
        }
        Some(tau) => {
            let (records, df) = measure_delay_far(&plan, monitor)?;
            agg.empirical_arl1 = df.arl1;
            agg.arl1_se = df.arl1_se;
            agg.false_alarm_rate = Some(df.false_alarm_rate);
            agg.expected_false_alarm_rate = Some(expected_false_alarm_rate(1.0 / config.arl0, tau - 1));
            agg.false_alarms = df.false_alarms;
            agg.censored = df.censored;
            report.runs = records;
        }
    }
    Ok(report)
}
