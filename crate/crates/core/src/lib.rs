//! Online change detection for multivariate datastreams with QuantTree
//! histograms and an EWMA statistic.
//!
//! A [`QuantTreePartition`] splits the input space into `K` bins from a
//! training set. The QT-EWMA detector tracks how often new samples land in
//! each bin and raises an alarm when the discrepancy exceeds thresholds
//! calibrated by Monte Carlo simulation for a target average run length.
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod bench;
pub mod calibration;
pub mod datagen;
pub mod detector;
pub mod error;
pub mod hexfloat;
pub mod quanttree;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use calibration::{calibrate, CalibrationConfig, ThresholdTable};
pub use datagen::{generate_stream, Law, StreamSpec};
pub use detector::{run_stream, DetectorConfig};
pub use error::{Error, Result};
pub use quanttree::{QuantTreePartition, SamplerMethod};
pub use scalar::{Precision, Scalar};

pub type Partition = QuantTreePartition<f64>;
pub type PartitionF32 = QuantTreePartition<f32>;
pub type Detector<'p> = detector::QtEwma<'p, f64>;
pub type DetectorF32<'p> = detector::QtEwma<'p, f32>;
pub type Tracker<'p> = detector::StatisticTracker<'p, f64>;
pub type BatchDetector<'p> = detector::BatchDetector<'p, f64>;
pub type State = detector::DetectorState<f64>;
