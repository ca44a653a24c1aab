//! Online monitoring over a fitted QuantTree partition.
//!
//! [`QtEwma`] runs the EWMA bin-proportion statistic against a calibrated
//! threshold sequence, optionally adapting its bin-probability estimates as
//! samples arrive (`beta`, `stop_at`). [`BatchDetector`] is the batch-wise
//! Pearson baseline converted to online use.

mod batch;
mod ewma;
mod qtewma;
mod run;

pub use batch::{calibrate_batch_threshold, pearson_statistic, BatchDetector, BatchOutcome, BatchThreshold};
pub use ewma::{statistic, EwmaParams, PROBABILITY_FLOOR};
pub use qtewma::{DetectorConfig, DetectorState, QtEwma, StatisticTracker, StepOutcome};
pub use run::{run_stream, write_trace, Observation, RunOutcome, StreamMonitor, TraceRow};
