//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive};

/// Floating scalar the metric, reward, and advantage arithmetic is generic
/// over. Implemented for `f32` and `f64`; everything downstream picks the
/// precision by annotation and the wire layer uses [`crate::Real`].
pub trait Scalar:
    Float + FromPrimitive + core::fmt::Debug + core::fmt::Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a cell count into a scalar. Counts at desk scale fit losslessly
/// in an f32 mantissa, and f64 is exact far beyond that.
pub fn from_count<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("cell count representable as scalar")
}

/// Converts an exact squared distance into a scalar.
pub fn from_sq<F: Scalar>(sq: u64) -> F {
    F::from_u64(sq).expect("squared distance representable as scalar")
}

/// Shorthand for lifting literal constants into the scalar type.
pub fn lit<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("literal representable as scalar")
}
