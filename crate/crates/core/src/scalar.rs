//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the geometry, kernels, smoothing and methods are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate are
/// calibrated for `f64`; `f32` instances work but reach correspondingly looser
/// accuracy.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for finite `f64` inputs on `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(k: usize) -> Self {
        Self::from_usize(k).expect("integer representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `|x|^e` evaluated as `exp(e ln|x|)`, with `0^e = 0` for `e > 0`.
///
/// Underflow flushes to zero instead of producing subnormal noise.
#[inline]
pub(crate) fn abs_pow<S: Scalar>(x: S, e: S) -> S {
    let a = x.abs();
    if a == S::zero() {
        return S::zero();
    }
    let v = (e * a.ln()).exp();
    if v < S::min_positive_value() {
        S::zero()
    } else {
        v
    }
}

/// Sign with the convention `sign(0) = +1`.
#[inline]
pub(crate) fn sign_nonneg<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        -S::one()
    } else {
        S::one()
    }
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
