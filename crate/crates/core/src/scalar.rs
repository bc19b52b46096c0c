//! Floating-point scalar abstraction.
//!
//! All routing math (pooling, logistic units, metrics) is generic over
//! [`Scalar`] so the same code paths run in `f32` for serving and in `f64`
//! where extra precision pays off, such as finite-difference gradient
//! checks. The on-disk model artifact always stores 32-bit floats.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type the classifiers compute with. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, used for constants, config values, and RNG
    /// draws. Rounds when the target is narrower.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }

    /// Conversion from a count.
    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("count fits in Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function; never produces NaN or infinity.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
