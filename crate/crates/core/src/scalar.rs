//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast, ToPrimitive};

/// Floating-point scalar the core math is generic over: `f32` or `f64`.
///
/// The training harness and all file formats use `f64` (see the crate-root
/// aliases); `f32` exists for callers that want the same math at lower
/// precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the scalar type.
#[inline]
pub fn fc<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("f64 constant converts into scalar type")
}

/// Convert a scalar into `f64` (exact for f32/f64).
#[inline]
pub fn to_f64<F: Scalar>(v: F) -> f64 {
    v.to_f64().expect("scalar converts to f64")
}
