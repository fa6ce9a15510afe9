//! Scalar abstraction shared by the dense and streaming engines.

use std::fmt::Debug;
use std::ops::Neg;

use num_traits::Num;

use crate::numerics::Half;

/// A pipeline working scalar.
///
/// Implemented for `f64` (wide reference numerics), `f32` and [`Half`]
/// (the emulated hardware format). All image math after preprocessing is
/// written against this trait, so one implementation of each stage serves
/// every precision.
pub trait Sample: Copy + Debug + PartialOrd + Num + Neg<Output = Self> + Send + Sync + 'static {
    /// Converts with the type's native rounding (RNE + flush-to-zero for [`Half`]).
    fn from_f64(v: f64) -> Self;
    /// Exact widening conversion.
    fn to_f64(self) -> f64;

    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }
}

impl Sample for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Sample for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Sample for Half {
    fn from_f64(v: f64) -> Self {
        Half::from_f64(v)
    }
    fn to_f64(self) -> f64 {
        Half::to_f64(self)
    }
    fn is_finite(self) -> bool {
        Half::is_finite(self)
    }
}
