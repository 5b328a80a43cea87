//! Scalar abstraction for the model and simulator math.
//!
//! All closed-form and Monte Carlo math is generic over [`Scalar`] so the
//! same code runs in `f32` or `f64`. Concrete aliases live at the crate
//! root; `f64` is the default throughout the pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the model and simulator.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Shorthand for conversion from a count.
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
