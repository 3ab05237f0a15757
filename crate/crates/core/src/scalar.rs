//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric code is generic over.
///
/// Implemented for `f32` and `f64`. Hyperparameters and file formats stay in
/// `f64`; they are converted with [`Real::of`] at the boundary.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Widens to `f64` for reporting and serialization.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<F: Real>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<F>() / F::count(xs.len()))
}

/// `n` equally spaced values from `lo` to `hi` inclusive. A single point is `hi`.
///
/// Endpoints are reproduced exactly, so `linspace(0, 0.5, n)` always ends on
/// `0.5` and `linspace(0.5, 1, n)` always starts on it.
pub fn linspace<F: Real>(lo: F, hi: F, n: usize) -> Vec<F> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let last = F::count(n - 1);
            (0..n).map(|i| lo + (hi - lo) * (F::count(i) / last)).collect()
        }
    }
}
