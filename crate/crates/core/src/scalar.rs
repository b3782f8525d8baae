//! Floating point abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real scalar type the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// assume `f64`; the `f32` instantiation is usable but will not meet them.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Maximum absolute value of a slice, zero when empty.
pub fn max_abs<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Trapezoid rule on an arbitrary (sorted) abscissa.
pub fn trapezoid<T: Real>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let half = T::lit(0.5);
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| half * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Trapezoid quadrature weights for a sorted abscissa.
pub fn trapezoid_weights<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut w = vec![T::zero(); n];
    let half = T::lit(0.5);
    for i in 0..n.saturating_sub(1) {
        let h = x[i + 1] - x[i];
        w[i] += half * h;
        w[i + 1] += half * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_for_linear() {
        let x = [0.0, 0.3, 1.0, 2.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((trapezoid(&x, &y) - (2.5 * 2.5 + 2.5)).abs() < 1e-14);
        let w = trapezoid_weights(&x);
        let s: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((s - trapezoid(&x, &y)).abs() < 1e-14);
    }

    #[test]
    fn works_for_f32() {
        let x = [0.0f32, 1.0];
        assert_eq!(trapezoid(&x, &[1.0, 1.0]), 1.0);
        assert_eq!(f32::lit(0.5), 0.5);
    }
}
