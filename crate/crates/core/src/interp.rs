//! Piecewise cubic Hermite interpolation.
//!
//! The monotone variant (Fritsch–Carlson slopes with the Fritsch–Butland
//! harmonic mean) is used for map inversion and for resampling trajectory
//! data onto Eulerian grids. Explicit slopes are used where derivatives are
//! already known to higher order, e.g. tabulated potentials.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct CubicHermite<T> {
    x: Vec<T>,
    y: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> CubicHermite<T> {
    /// Shape-preserving interpolant: monotone data stays monotone.
    pub fn monotone(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        check_abscissa(&x, y.len())?;
        let slopes = pchip_slopes(&x, &y);
        Ok(Self { x, y, slopes })
    }

    /// Hermite interpolant with caller-supplied nodal slopes.
    pub fn with_slopes(x: Vec<T>, y: Vec<T>, slopes: Vec<T>) -> Result<Self> {
        check_abscissa(&x, y.len())?;
        if slopes.len() != x.len() {
            return Err(Error::InvalidInput("slope count must match abscissa".into()));
        }
        Ok(Self { x, y, slopes })
    }

    /// Hermite interpolant from supplied slopes, limited where needed so
    /// that monotone data gives a monotone curve (Fritsch–Carlson).
    pub fn monotone_with_slopes(x: Vec<T>, y: Vec<T>, mut slopes: Vec<T>) -> Result<Self> {
        check_abscissa(&x, y.len())?;
        if slopes.len() != x.len() {
            return Err(Error::InvalidInput("slope count must match abscissa".into()));
        }
        let three = T::lit(3.0);
        for k in 0..x.len() - 1 {
            let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if delta == T::zero() {
                slopes[k] = T::zero();
                slopes[k + 1] = T::zero();
                continue;
            }
            let alpha = (slopes[k] / delta).max(T::zero());
            let beta = (slopes[k + 1] / delta).max(T::zero());
            slopes[k] = alpha * delta;
            slopes[k + 1] = beta * delta;
            let r = alpha.hypot(beta);
            if r > three {
                let tau = three / r;
                slopes[k] = tau * alpha * delta;
                slopes[k + 1] = tau * beta * delta;
            }
        }
        Ok(Self { x, y, slopes })
    }

    pub fn domain(&self) -> (T, T) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, xq: T) -> Option<usize> {
        let (lo, hi) = self.domain();
        if !(xq >= lo && xq <= hi) {
            return None;
        }
        let k = self.x.partition_point(|&v| v <= xq);
        Some(k.saturating_sub(1).min(self.x.len() - 2))
    }

    /// Value at `xq`; `None` outside the data range (no extrapolation).
    pub fn eval(&self, xq: T) -> Option<T> {
        let k = self.segment(xq)?;
        let h = self.x[k + 1] - self.x[k];
        let s = (xq - self.x[k]) / h;
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        Some(
            h00 * self.y[k]
                + h10 * h * self.slopes[k]
                + h01 * self.y[k + 1]
                + h11 * h * self.slopes[k + 1],
        )
    }

    /// First derivative at `xq`; `None` outside the data range.
    pub fn derivative(&self, xq: T) -> Option<T> {
        let k = self.segment(xq)?;
        let h = self.x[k + 1] - self.x[k];
        let s = (xq - self.x[k]) / h;
        let six = T::lit(6.0);
        let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
        let s2 = s * s;
        let d00 = (six * s2 - six * s) / h;
        let d10 = three * s2 - four * s + T::one();
        let d01 = (-six * s2 + six * s) / h;
        let d11 = three * s2 - two * s;
        Some(
            d00 * self.y[k]
                + d10 * self.slopes[k]
                + d01 * self.y[k + 1]
                + d11 * self.slopes[k + 1],
        )
    }
}

fn check_abscissa<T: Real>(x: &[T], ny: usize) -> Result<()> {
    if x.len() != ny {
        return Err(Error::InvalidInput(format!(
            "interpolation abscissa has {} points but ordinate has {ny}",
            x.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "interpolation needs at least two points".into(),
        ));
    }
    if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "interpolation abscissa not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

fn pchip_slopes<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let (two, three) = (T::lit(2.0), T::lit(3.0));
    let mut d = vec![T::zero(); n];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a == T::zero() || b == T::zero() || a.signum() != b.signum() {
            d[i] = T::zero();
        } else {
            let w1 = two * h[i] + h[i - 1];
            let w2 = h[i] + two * h[i - 1];
            d[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    let end = |h0: T, h1: T, d0: T, d1: T| {
        let mut s = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            s = T::zero();
        } else if d0.signum() != d1.signum() && s.abs() > three * d0.abs() {
            s = three * d0;
        }
        s
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_linear_data_exactly() {
        let x: Vec<f64> = (0..7).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let p = CubicHermite::monotone(x, y).unwrap();
        for q in [0.0, 0.05, 0.77, p.domain().1] {
            assert!((p.eval(q).unwrap() - (2.0 * q - 1.0)).abs() < 1e-14);
            assert!((p.derivative(q).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_slopes_reproduce_cubics() {
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.4).collect();
        let f = |v: f64| v * v * v + v;
        let y = x.iter().map(|&v| f(v)).collect();
        let d = x.iter().map(|&v| 3.0 * v * v + 1.0).collect();
        let p = CubicHermite::monotone_with_slopes(x, y, d).unwrap();
        for q in [0.1, 0.93, 1.77] {
            assert!((p.eval(q).unwrap() - f(q)).abs() < 1e-13);
        }
    }

    #[test]
    fn no_extrapolation() {
        let p = CubicHermite::monotone(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        assert!(p.eval(-1e-9).is_none());
        assert!(p.eval(2.0 + 1e-9).is_none());
        assert_eq!(p.eval(2.0), Some(4.0));
    }

    #[test]
    fn rejects_non_monotone_abscissa() {
        assert!(CubicHermite::monotone(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in proptest::collection::vec(0.01f64..1.0, 3..12),
            rises in proptest::collection::vec(0.0f64..2.0, 12),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (i, s) in steps.iter().enumerate() {
                x.push(x[i] + s);
                y.push(y[i] + rises[i]);
            }
            // wild slopes must be tamed by the limiter
            let slopes: Vec<f64> = (0..x.len()).map(|i| if i % 2 == 0 { 40.0 } else { -3.0 }).collect();
            for p in [
                CubicHermite::monotone(x.clone(), y.clone()).unwrap(),
                CubicHermite::monotone_with_slopes(x.clone(), y.clone(), slopes).unwrap(),
            ] {
                let (lo, hi) = p.domain();
                let mut prev = p.eval(lo).unwrap();
                for k in 1..=200 {
                    let q = (lo + (hi - lo) * k as f64 / 200.0).min(hi);
                    let v = p.eval(q).unwrap();
                    prop_assert!(v >= prev - 1e-12);
                    prev = v;
                }
            }
        }
    }
}
