//! Distribution-free threshold calibration.
//!
//! Thresholds `h_t` are chosen so that, among simulated stationary paths that
//! have not alarmed before `t`, a fraction `α = 1/ARL₀` exceeds `h_t`. The
//! detection time is then geometric with mean `ARL₀`. Paths are simulated
//! without data: a bin-probability vector is drawn from its Dirichlet law and
//! bins are drawn from it, then fed through the exact detector recursion.

mod poly;
pub mod quantile;
mod simulate;
mod table;

pub use poly::{fit_threshold_polynomial, PolyFit};
pub use quantile::{conditional_quantile_thresholds, upper_quantile, RawSeries, RawThreshold};
pub use simulate::{simulate_statistic_paths, streaming_thresholds, SimulationSpec, StatisticPaths};
pub use table::{calibrate, CalibrationConfig, SimulationMode, TableMeta, ThresholdSource, ThresholdTable};

/// Smallest replicate count accepted by the simulator.
pub const MIN_REPLICATES: usize = 10_000;
