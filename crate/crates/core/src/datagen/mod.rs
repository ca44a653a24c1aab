//! Synthetic training sets and datastreams, with optional change points,
//! plus CSV ingestion for real data.

mod csv;
mod law;
mod shift;
mod stream;

pub use self::csv::{ingest_csv, Dataset, IngestOptions};
pub use law::{Covariance, Law};
pub use shift::{gaussian_change_mean_shift, gaussian_kl, symmetric_gaussian_kl};
pub use stream::{generate_stream, Change, PostChange, PreparedSpec, Scenario, StreamGenerator, StreamSpec};
