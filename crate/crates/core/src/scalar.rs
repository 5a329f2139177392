use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numerical modules are generic over.
///
/// Implemented for `f32` and `f64`. Everything that touches log-intensities,
/// thresholds or metric sums is written against this trait; timestamps and
/// event counts stay integral.
pub trait Scalar:
    'static + Send + Sync + Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + LowerExp
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: u32) -> Self {
        Self::from_u32(n).expect("count representable")
    }

    #[inline]
    fn from_len(n: usize) -> Self {
        Self::from_usize(n).expect("length representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
