//! Scalar abstraction for the numeric core.
//!
//! All optimizer math is written against [`Real`] so the same code runs in
//! `f32` or `f64`; the experiment harness instantiates everything at `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numeric core.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and RNG output.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    /// Conversion to `f64` for metrics and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize conversion")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}
