//! Scalar abstraction shared by the geometric and numerical modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and sampled noise.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    /// Lossless-enough conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
