//! Scalar abstraction for the numerical core.
//!
//! The mathematical layers are generic over [`Real`], a minimal IEEE
//! floating-point contract. `f64` is the scalar of record for the pipelines;
//! `f32` instantiations remain available for cheap exploratory sweeps.

use core::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numerical core.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from an `f64` constant.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert into the scalar type")
    }

    /// Widening (or identity) view as `f64`, used for statistics and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert into the scalar type")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    /// Bit pattern of the widened value; `f32 -> f64` is exact, so equality
    /// of these bits is equality of the represented numbers.
    #[inline]
    fn bits(self) -> u64 {
        self.as_f64().to_bits()
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}
