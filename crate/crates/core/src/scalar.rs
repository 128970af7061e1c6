//! Floating-point abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used by the generic kernels (slab solver, FDTD engine,
/// transfer matrices, line-shape fitting).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + std::iter::Sum
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Stopping tolerance appropriate for root finding in this precision.
    fn root_tolerance() -> Self;
}

impl Real for f32 {
    fn root_tolerance() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn root_tolerance() -> Self {
        1e-12
    }
}
