//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the statistics and simulator are generic over.
///
/// Implemented for `f32` and `f64`. Accuracy contracts quoted in the docs
/// (e.g. `1e-12` on inverse CDFs) are for `f64`; `f32` gets the analogous
/// bounds scaled by its machine epsilon.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from an integer count.
    #[inline]
    fn count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    /// Widening to `f64` for serialization and reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Smallest p-value reported downstream; `1e-300` or the smallest
    /// positive normal of the type, whichever is larger.
    #[inline]
    fn p_floor() -> Self {
        Self::lit(1e-300).max(Self::min_positive_value())
    }
}

impl Real for f32 {}
impl Real for f64 {}
