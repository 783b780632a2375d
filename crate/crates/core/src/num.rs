//! Scalar abstraction shared by the scheduling math and geometry.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, NumAssign, NumCast};

/// Floating-point scalar the scheduling and coverage math is written against.
pub trait Scalar:
    Float + FloatConst + NumAssign + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + NumAssign + NumCast + Debug + Display + Default + Send + Sync + 'static
{
}
