//! Finite-difference derivative operators on (possibly non-uniform) 1D grids.
//!
//! Weights come from Fornberg's recursion, so any derivative order and any
//! accuracy order is available. Interior points use the narrowest centered
//! window reaching the requested accuracy; points too close to either end
//! switch to a one-sided window of `derivative + accuracy` nodes so the
//! formal accuracy is kept all the way to the boundary.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fornberg finite-difference weights.
///
/// Returns `w[k][j]`, the weight of `nodes[j]` in the approximation of the
/// `k`-th derivative at `z`, for `k = 0..=max_derivative`.
pub fn fornberg_weights<T: Real>(z: T, nodes: &[T], max_derivative: usize) -> Vec<Vec<T>> {
    let n = nodes.len();
    let m = max_derivative;
    // c[j][k]
    let mut c = vec![vec![T::zero(); m + 1]; n];
    if n == 0 {
        return vec![Vec::new(); m + 1];
    }
    let mut c1 = T::one();
    let mut c4 = nodes[0] - z;
    c[0][0] = T::one();
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kf = T::from_usize_lossy(k);
                    c[i][k] = c1 * (kf * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                let kf = T::from_usize_lossy(k);
                c[j][k] = (c4 * c[j][k] - kf * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    (0..=m).map(|k| (0..n).map(|j| c[j][k]).collect()).collect()
}

/// Precomputed derivative operator for a fixed grid.
#[derive(Debug, Clone)]
pub struct DerivativeOperator<T> {
    derivative: usize,
    accuracy: usize,
    rows: Vec<(usize, Vec<T>)>,
}

impl<T: Real> DerivativeOperator<T> {
    /// Builds the operator for the `derivative`-th derivative with formal
    /// accuracy `accuracy` (2 or 4 in practice; any positive even value works).
    pub fn new(nodes: &[T], derivative: usize, accuracy: usize) -> Result<Self> {
        if derivative == 0 || accuracy == 0 {
            return Err(Error::InvalidInput(
                "derivative and accuracy orders must be positive".into(),
            ));
        }
        let n = nodes.len();
        let centered = 2 * ((derivative + accuracy - 1) / 2) + 1;
        let edge = (derivative + accuracy).max(centered);
        if n < edge {
            return Err(Error::InvalidInput(format!(
                "grid of {n} points is too small for a derivative of order {derivative} \
                 at accuracy {accuracy} (needs {edge})"
            )));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "stencil nodes must be strictly increasing".into(),
            ));
        }
        let half = centered / 2;
        let rows = (0..n)
            .map(|i| {
                let (start, width) = if i >= half && i + half < n {
                    (i - half, centered)
                } else {
                    let s = (i as isize - (edge / 2) as isize).clamp(0, (n - edge) as isize);
                    (s as usize, edge)
                };
                let w = fornberg_weights(nodes[i], &nodes[start..start + width], derivative);
                (start, w.into_iter().nth(derivative).unwrap_or_default())
            })
            .collect();
        Ok(Self {
            derivative,
            accuracy,
            rows,
        })
    }

    pub fn derivative(&self) -> usize {
        self.derivative
    }

    pub fn accuracy(&self) -> usize {
        self.accuracy
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Derivative at grid point `i`.
    #[inline]
    pub fn at(&self, f: &[T], i: usize) -> T {
        let (start, ref w) = self.rows[i];
        w.iter()
            .zip(&f[start..start + w.len()])
            .fold(T::zero(), |acc, (&wk, &fk)| acc + wk * fk)
    }

    pub fn apply_into(&self, f: &[T], out: &mut [T]) {
        assert_eq!(f.len(), self.rows.len(), "field length must match the grid");
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.at(f, i);
        }
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); f.len()];
        self.apply_into(f, &mut out);
        out
    }

    /// Product with the transposed operator matrix.
    pub fn apply_transpose(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.rows.len(), "field length must match the grid");
        let mut out = vec![T::zero(); f.len()];
        for ((start, w), &fi) in self.rows.iter().zip(f) {
            for (o, &wk) in out[*start..*start + w.len()].iter_mut().zip(w) {
                *o += wk * fi;
            }
        }
        out
    }
}

/// First, second and third derivative operators at a common accuracy.
#[derive(Debug, Clone)]
pub struct DerivativeSet<T> {
    pub d1: DerivativeOperator<T>,
    pub d2: DerivativeOperator<T>,
    pub d3: DerivativeOperator<T>,
}

impl<T: Real> DerivativeSet<T> {
    pub fn new(nodes: &[T], accuracy: usize) -> Result<Self> {
        Ok(Self {
            d1: DerivativeOperator::new(nodes, 1, accuracy)?,
            d2: DerivativeOperator::new(nodes, 2, accuracy)?,
            d3: DerivativeOperator::new(nodes, 3, accuracy)?,
        })
    }
}
