//! Scalar abstraction for the numeric kernels.
//!
//! All cell, degradation, controller and economics maths is written against
//! [`Real`] so the same code runs in `f32` or `f64`. Drivers pin `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the simulation kernels.
pub trait Real:
    Float + FromPrimitive + Sum + Debug + Display + Copy + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal must be representable in the scalar type")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + Sum + Debug + Display + Copy + Send + Sync + 'static
{
}

/// Free-function form of [`Real::of`], convenient where inference flows better.
pub fn real<F: Real>(v: f64) -> F {
    F::of(v)
}
