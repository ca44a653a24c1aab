//! Scalar abstraction for the numeric core.
//!
//! Partitions, the EWMA recursion and the Monte Carlo simulator are generic
//! over [`Scalar`], so the whole monitoring path can run in `f32` or `f64`.
//! Calibrated thresholds are always stored as `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the monitoring core.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Name recorded in threshold-table metadata.
    const NAME: &'static str;

    /// Lossy conversion from `f64`; exact for values that originated as `Self`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    /// Lossless widening to `f64`.
    fn widen(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Runtime tag for the two supported precisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn of<F: Scalar>() -> Self {
        if F::NAME == "f32" {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}
