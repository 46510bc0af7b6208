//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All density, conjugate-update and sampler code is written against [`Real`],
//! which is implemented for `f32` and `f64`. Random variates are always drawn
//! in `f64` and narrowed, so an `f32` chain sees the same stream as an `f64`
//! chain up to rounding.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn epsilon_value() -> Self;
}

impl Real for f32 {
    fn epsilon_value() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon_value() -> Self {
        f64::EPSILON
    }
}
