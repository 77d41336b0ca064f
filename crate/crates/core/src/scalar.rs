use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Everything in this crate is written
/// against this trait; the crate root exposes `f64` aliases for the common case.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for finite literals in `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::one() / Self::two()
    }

    /// Square root of machine epsilon, the usual finite-difference scale.
    #[inline]
    fn sqrt_eps() -> Self {
        Self::epsilon().sqrt()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
