//! Scalar abstraction for the numeric core.
//!
//! All core math is generic over [`Scalar`], which is any IEEE float that
//! ndarray and rustfft can work with. In practice this means `f32` or `f64`;
//! the experiment harness and the type aliases at the crate root use `f64`.

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FftNum + NumAssign + ScalarOperand + Sum + Display + LowerExp
{
    /// Lossy conversion to `f64`, for logging and cross-type caches.
    fn as_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Conversion from `f64`, for algorithm constants.
#[inline]
pub fn sc<T: Scalar>(x: f64) -> T {
    <T as num_traits::FromPrimitive>::from_f64(x).expect("constant representable in scalar")
}
