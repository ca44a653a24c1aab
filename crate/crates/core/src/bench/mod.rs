//! Experiment harness: empirical ARL₀, detection delay against false-alarm
//! rate, geometric run-length checks and AUC-by-lag studies.

mod experiment;
mod records;
mod runner;

pub use experiment::{
    run_experiment, Aggregates, AucPoint, AucSettings, BatchSettings, ExperimentConfig, ExperimentReport,
    TableCache, ThresholdSettings, REPORT_SCHEMA_VERSION, TABLE_CACHE_ENV,
};
pub use records::{
    arl0_estimate, delay_far, delays, expected_false_alarm_rate, geometric_gof, Arl0Estimate, DelayFar, RunRecord,
    MIN_ARL0_RUNS,
};
pub use runner::{auc_by_lag, measure_arl0, measure_delay_far, run_many, AucStudy, MonitorSpec, RunPlan};
