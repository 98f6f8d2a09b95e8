//! Scalar abstraction for the numeric core.
//!
//! Network training, autoencoders, ranking metrics and the eigensolver are
//! generic over [`Scalar`] so they run in either single or double precision.
//! Statistics that produce p-values (association scan, QC tests) stay in
//! `f64`: tail probabilities down at the 1e-300 floor are not representable
//! in `f32`.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, panicking only for non-representable NaN-free inputs.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 not representable in scalar type")
    }

    /// Widening (or identity) conversion to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
