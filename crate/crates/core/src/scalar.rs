//! The floating-point abstraction every numeric routine is written against.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the crate. Implemented for `f32` and `f64`.
///
/// Tolerances are written as `f64` literals tuned for double precision; [`Real::tol`]
/// widens them to a few dozen ulps for narrower types so the same thresholds stay
/// meaningful in `f32`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// A tolerance of `base`, floored at 64 machine epsilons of `Self`.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(base).max(floor)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `acos` with the argument clamped into `[-1, 1]` when it lies within `1e-12` of that range.
pub(crate) fn clamped_acos<T: Real>(x: T) -> Option<T> {
    let band = T::tol(1e-12);
    if x.is_nan() || x > T::one() + band || x < -T::one() - band {
        return None;
    }
    Some(x.max(-T::one()).min(T::one()).acos())
}
