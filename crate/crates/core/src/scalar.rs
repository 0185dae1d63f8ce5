//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type: `f32` or `f64`.
///
/// The tolerances are part of the type because a row-sum check that is
/// meaningful for `f64` (1e-9) is unattainable in single precision.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a probability row sum from one.
    const STOCHASTIC_TOL: f64;
    /// Allowed sup-norm residual `|C x - b|` after a linear solve.
    const SOLVE_RESIDUAL_TOL: f64;

    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for finite literals and `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Real for f64 {
    const STOCHASTIC_TOL: f64 = 1e-9;
    const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
}

impl Real for f32 {
    const STOCHASTIC_TOL: f64 = 1e-5;
    const SOLVE_RESIDUAL_TOL: f64 = 1e-4;
}
