//! Scalar abstraction over the element type of tensors and series.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, NumAssignOps, NumCast};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point element type the numeric core is generic over.
///
/// Implemented for `f32` and `f64`. The extra methods hide the rand
/// plumbing so generic code can draw samples without repeating
/// distribution bounds at every call site.
pub trait Scalar:
    Float + NumAssignOps + NumCast + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// One standard-normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[lo, hi)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;
}

macro_rules! impl_scalar {
    ($($t:ty)*) => {$(
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
                if lo == hi {
                    return lo;
                }
                rng.gen_range(lo..hi)
            }
        }
    )*};
}

impl_scalar!(f32 f64);
