//! Scalar abstraction shared by the dynamics, controller, linearization and
//! driver-network code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the numerical core is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion to `f64`, used at I/O and wire boundaries.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}
