//! Deformation-gradient algebra of the fluid map `a -> q(a, t)` in three
//! dimensions: Jacobian, cofactors and their derivative, the quantum stress
//! tensor in both its label-space and space forms, the quantum potential and
//! the internal energy density.
//!
//! Index conventions: `g[i][l] = dq_i/da_l`, `d2[m][k][n] = d2q_m/da_k da_n`,
//! `d3[m][k][l][n] = d3q_m/da_k da_l da_n`.

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Real};
use crate::stencil::DerivativeOperator;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Tensor3<T> = [[[T; 3]; 3]; 3];
pub type Tensor4<T> = [[[[T; 3]; 3]; 3]; 3];

/// Densities below this fraction of the field maximum are masked.
pub const RHO_FLOOR: f64 = 1e-14;

const LEVI_CIVITA: [[[i8; 3]; 3]; 3] = {
    let mut e = [[[0i8; 3]; 3]; 3];
    e[0][1][2] = 1;
    e[1][2][0] = 1;
    e[2][0][1] = 1;
    e[0][2][1] = -1;
    e[2][1][0] = -1;
    e[1][0][2] = -1;
    e
};

#[inline]
fn eps<T: Real>(i: usize, j: usize, k: usize) -> T {
    match LEVI_CIVITA[i][j][k] {
        1 => T::one(),
        -1 => -T::one(),
        _ => T::zero(),
    }
}

/// Index triples where the Levi-Civita symbol is nonzero.
fn eps_entries() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..27).filter_map(|n| {
        let (i, j, k) = (n / 9, (n / 3) % 3, n % 3);
        (LEVI_CIVITA[i][j][k] != 0).then_some((i, j, k))
    })
}

fn zero3<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

/// Deformation gradient at one label, with optional higher derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformGradient<T> {
    pub g: Mat3<T>,
    pub d2: Option<Tensor3<T>>,
    pub d3: Option<Tensor4<T>>,
}

impl<T: Real> DeformGradient<T> {
    pub fn new(g: Mat3<T>) -> Self {
        Self {
            g,
            d2: None,
            d3: None,
        }
    }

    pub fn identity() -> Self {
        let mut g = zero3();
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self::new(g)
    }

    pub fn with_derivatives(g: Mat3<T>, d2: Tensor3<T>, d3: Tensor4<T>) -> Self {
        Self {
            g,
            d2: Some(d2),
            d3: Some(d3),
        }
    }
}

/// `J = (1/3!) eps_ijk eps_lmn g_il g_jm g_kn`.
pub fn jacobian<T: Real>(g: &DeformGradient<T>) -> T {
    let g = &g.g;
    let mut sum = T::zero();
    for (i, j, k) in eps_entries() {
        for (l, m, n) in eps_entries() {
            sum += eps::<T>(i, j, k) * eps::<T>(l, m, n) * g[i][l] * g[j][m] * g[k][n];
        }
    }
    sum / T::lit(6.0)
}

/// Cofactor `J_il = (1/2) eps_ijk eps_lmn g_jm g_kn`, i.e. dJ/dg_il.
pub fn cofactor_matrix<T: Real>(g: &DeformGradient<T>) -> Mat3<T> {
    let g = &g.g;
    let mut c = zero3();
    for (i, j, k) in eps_entries() {
        for (l, m, n) in eps_entries() {
            c[i][l] += eps::<T>(i, j, k) * eps::<T>(l, m, n) * g[j][m] * g[k][n];
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v *= T::lit(0.5);
        }
    }
    c
}

/// `H[j][m][l][n] = dJ_jl / dg_mn = eps_jmk eps_lnr g_kr`.
pub fn hyper_cofactor<T: Real>(g: &DeformGradient<T>) -> Tensor4<T> {
    let g = &g.g;
    let mut h = [[[[T::zero(); 3]; 3]; 3]; 3];
    for (j, m, k) in eps_entries() {
        for (l, n, r) in eps_entries() {
            h[j][m][l][n] += eps::<T>(j, m, k) * eps::<T>(l, n, r) * g[k][r];
        }
    }
    h
}

/// `g_kj J_ki - J delta_ij`; zero for an exact cofactor.
pub fn cofactor_identity_residual<T: Real>(g: &DeformGradient<T>) -> Mat3<T> {
    let c = cofactor_matrix(g);
    let det = jacobian(g);
    let mut r = zero3();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = T::zero();
            for k in 0..3 {
                s += g.g[k][j] * c[k][i];
            }
            r[i][j] = s - if i == j { det } else { T::zero() };
        }
    }
    r
}

/// Largest |sigma_ij - sigma_ji|.
pub fn symmetry_defect<T: Real>(s: &Mat3<T>) -> T {
    let mut d = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            d = d.max((s[i][j] - s[j][i]).abs());
        }
    }
    d
}

pub fn max_abs_mat<T: Real>(s: &Mat3<T>) -> T {
    s.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// `sigma_ij = (hbar^2/4m) (rho^-1 d_i rho d_j rho - d_i d_j rho)` at a point.
pub fn stress_eulerian_point<T: Real>(
    rho: T,
    grad: &Vec3<T>,
    hess: &Mat3<T>,
    hbar: T,
    mass: T,
) -> Mat3<T> {
    let c = hbar * hbar / (T::lit(4.0) * mass);
    let mut s = zero3();
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = c * (grad[i] * grad[j] / rho - hess[i][j]);
        }
    }
    s
}

/// Quantum potential at a point from the density, its gradient and Laplacian.
pub fn quantum_potential_point<T: Real>(
    rho: T,
    grad: &Vec3<T>,
    laplacian: T,
    hbar: T,
    mass: T,
) -> T {
    let g2 = grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
    hbar * hbar / (T::lit(4.0) * mass * rho) * (g2 / (T::lit(2.0) * rho) - laplacian)
}

/// Quantum potential in terms of `l = ln rho`: `-(hbar^2/4m)(l'' + l'^2/2)`.
/// Algebraically identical to [`quantum_potential_point`] but free of
/// divisions by the density.
#[inline]
pub fn quantum_potential_log_form<T: Real>(log_d1: T, log_d2: T, hbar: T, mass: T) -> T {
    -hbar * hbar / (T::lit(4.0) * mass) * (log_d2 + T::lit(0.5) * log_d1 * log_d1)
}

/// Internal energy density `U = (hbar^2/8m) rho^-2 |grad rho|^2` at a point.
pub fn internal_energy_point<T: Real>(rho: T, grad: &Vec3<T>, hbar: T, mass: T) -> T {
    let g2 = grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
    hbar * hbar / (T::lit(8.0) * mass) * g2 / (rho * rho)
}

/// Label-space form of the stress tensor, evaluated from the deformation
/// gradient with its second and third label-derivatives and the initial
/// density with its first two label-derivatives.
///
/// The hyper-cofactor term printed with the indices `mms` is read as
/// `J_{mrns} = dJ_mn / dg_rs`, the derivative of the `J_mn` factor along
/// `a_k`. Only with that reading does the result equal
/// [`stress_eulerian_point`] of the pushed-forward density on maps with
/// curvature.
pub fn stress_lagrangian<T: Real>(
    g: &DeformGradient<T>,
    rho0: T,
    drho0: &Vec3<T>,
    d2rho0: &Mat3<T>,
    hbar: T,
    mass: T,
) -> Result<Mat3<T>> {
    let (d2, d3) = match (&g.d2, &g.d3) {
        (Some(d2), Some(d3)) => (d2, d3),
        _ => {
            return Err(Error::InvalidInput(
                "stress_lagrangian needs second and third label derivatives".into(),
            ))
        }
    };
    let det = jacobian(g);
    if !(det > T::zero()) || !det.is_finite() {
        return Err(Error::InvalidInput(format!("nonpositive Jacobian {det}")));
    }
    if !(rho0 > T::zero()) {
        return Err(Error::InvalidInput(format!("nonpositive rho0 {rho0}")));
    }
    let cof = cofactor_matrix(g);
    let hyp = hyper_cofactor(g);
    let inv_j = T::one() / det;
    let two = T::lit(2.0);

    // B[j][k]: the bracket, contracted afterwards with J_ik.
    let mut b = zero3::<T>();
    for j in 0..3 {
        for k in 0..3 {
            let mut acc = T::zero();
            for l in 0..3 {
                acc += cof[j][l] * drho0[k] * drho0[l] / rho0;
                acc -= cof[j][l] * d2rho0[k][l];
                for m in 0..3 {
                    for n in 0..3 {
                        let q_mkn = d2[m][k][n];
                        acc += (inv_j * cof[j][l] * cof[m][n] - hyp[j][m][l][n]) * drho0[l] * q_mkn;
                        acc += rho0 * inv_j * cof[j][l] * cof[m][n] * d3[m][k][l][n];
                        let q_mln = d2[m][l][n];
                        for r in 0..3 {
                            for s in 0..3 {
                                let q_rks = d2[r][k][s];
                                let coeff = inv_j * cof[m][n] * hyp[j][r][l][s]
                                    + inv_j * cof[j][l] * hyp[m][r][n][s]
                                    - two * inv_j * inv_j * cof[j][l] * cof[m][n] * cof[r][s];
                                acc += rho0 * coeff * q_rks * q_mln;
                            }
                        }
                    }
                }
            }
            b[j][k] = acc;
        }
    }
    let c = hbar * hbar / (T::lit(4.0) * mass) * inv_j * inv_j * inv_j;
    let mut sigma = zero3();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = T::zero();
            for k in 0..3 {
                s += cof[i][k] * b[j][k];
            }
            sigma[i][j] = c * s;
        }
    }
    Ok(sigma)
}

/// A field over grid points with an explicit validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField<T> {
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> MaskedField<T> {
    pub fn max_abs_valid(&self) -> T {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(T::zero(), |m, (v, _)| m.max(v.abs()))
    }
}

struct DensityDerivatives<T> {
    rho: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    valid: Vec<bool>,
}

fn density_derivatives<T: Real>(x: &[T], rho: &[T], accuracy: usize) -> Result<DensityDerivatives<T>> {
    if x.len() != rho.len() {
        return Err(Error::GridMismatch("density and grid lengths differ".into()));
    }
    let d1 = DerivativeOperator::new(x, 1, accuracy)?.apply(rho);
    let d2 = DerivativeOperator::new(x, 2, accuracy)?.apply(rho);
    let floor = max_abs(rho) * T::lit(RHO_FLOOR);
    let valid = rho.iter().map(|&r| r > floor).collect();
    Ok(DensityDerivatives {
        rho: rho.to_vec(),
        d1,
        d2,
        valid,
    })
}

/// 1D stress `sigma_xx` on a grid; points with rho under the floor are masked.
pub fn stress_eulerian_1d<T: Real>(
    x: &[T],
    rho: &[T],
    hbar: T,
    mass: T,
    accuracy: usize,
) -> Result<MaskedField<T>> {
    let dd = density_derivatives(x, rho, accuracy)?;
    let c = hbar * hbar / (T::lit(4.0) * mass);
    let values = (0..x.len())
        .map(|i| {
            if dd.valid[i] {
                c * (dd.d1[i] * dd.d1[i] / dd.rho[i] - dd.d2[i])
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(MaskedField {
        values,
        valid: dd.valid,
    })
}

/// 1D quantum potential on a grid.
pub fn quantum_potential_1d<T: Real>(
    x: &[T],
    rho: &[T],
    hbar: T,
    mass: T,
    accuracy: usize,
) -> Result<MaskedField<T>> {
    let dd = density_derivatives(x, rho, accuracy)?;
    let values = (0..x.len())
        .map(|i| {
            if dd.valid[i] {
                quantum_potential_point(dd.rho[i], &[dd.d1[i], T::zero(), T::zero()], dd.d2[i], hbar, mass)
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(MaskedField {
        values,
        valid: dd.valid,
    })
}

/// 1D internal energy density on a grid.
pub fn internal_energy_1d<T: Real>(
    x: &[T],
    rho: &[T],
    hbar: T,
    mass: T,
    accuracy: usize,
) -> Result<MaskedField<T>> {
    let dd = density_derivatives(x, rho, accuracy)?;
    let values = (0..x.len())
        .map(|i| {
            if dd.valid[i] {
                internal_energy_point(dd.rho[i], &[dd.d1[i], T::zero(), T::zero()], hbar, mass)
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(MaskedField {
        values,
        valid: dd.valid,
    })
}

/// `max |rho^-1 d sigma/dx - dV_Q/dx|` over interior valid points, using
/// derivative operators of the given accuracy throughout.
pub fn force_identity_residual<T: Real>(
    x: &[T],
    rho: &[T],
    hbar: T,
    mass: T,
    accuracy: usize,
) -> Result<T> {
    let sigma = stress_eulerian_1d(x, rho, hbar, mass, accuracy)?;
    let vq = quantum_potential_1d(x, rho, hbar, mass, accuracy)?;
    let d1 = DerivativeOperator::new(x, 1, accuracy)?;
    let ds = d1.apply(&sigma.values);
    let dv = d1.apply(&vq.values);
    let margin = accuracy + 1;
    let mut worst = T::zero();
    for i in margin..x.len().saturating_sub(margin) {
        let window_ok = (i - margin..=i + margin).all(|k| sigma.valid[k]);
        if window_ok {
            worst = worst.max((ds[i] / rho[i] - dv[i]).abs());
        }
    }
    Ok(worst)
}

/// Maximum over interior points of `|d J_ij / d a_j|`, with the cofactor
/// sampled on a uniform cube of spacing `h` around `center` and its
/// divergence taken by second-order central differences.
pub fn cofactor_divergence_max<T: Real, F>(gradient: F, center: Vec3<T>, half_width: T, h: T) -> T
where
    F: Fn(Vec3<T>) -> Mat3<T>,
{
    let n = (T::lit(2.0) * half_width / h).round().to_usize().unwrap_or(2).max(2) + 1;
    let origin = [
        center[0] - half_width,
        center[1] - half_width,
        center[2] - half_width,
    ];
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut cof = vec![zero3::<T>(); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let a = [
                    origin[0] + h * T::from_usize_lossy(i),
                    origin[1] + h * T::from_usize_lossy(j),
                    origin[2] + h * T::from_usize_lossy(k),
                ];
                cof[idx(i, j, k)] = cofactor_matrix(&DeformGradient::new(gradient(a)));
            }
        }
    }
    let two_h = T::lit(2.0) * h;
    let mut worst = T::zero();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                for row in 0..3 {
                    let div = (cof[idx(i + 1, j, k)][row][0] - cof[idx(i - 1, j, k)][row][0]
                        + cof[idx(i, j + 1, k)][row][1]
                        - cof[idx(i, j - 1, k)][row][1]
                        + cof[idx(i, j, k + 1)][row][2]
                        - cof[idx(i, j, k - 1)][row][2])
                        / two_h;
                    worst = worst.max(div.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64, c: f64) -> DeformGradient<f64> {
        DeformGradient::new([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(jacobian(&DeformGradient::<f64>::identity()), 1.0);
        assert!((jacobian(&diag(2.0, 3.0, 4.0)) - 24.0).abs() < 1e-13);
        let dup = DeformGradient::new([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.5, -1.0, 2.0]]);
        assert!(jacobian::<f64>(&dup).abs() < 1e-14);
    }

    #[test]
    fn cofactor_examples() {
        let c = cofactor_matrix(&DeformGradient::<f64>::identity());
        assert_eq!(c, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let c = cofactor_matrix(&diag(2.0, 3.0, 4.0));
        assert_eq!(c, [[12.0, 0.0, 0.0], [0.0, 8.0, 0.0], [0.0, 0.0, 6.0]]);
    }

    #[test]
    fn hyper_cofactor_of_identity() {
        let h = hyper_cofactor(&DeformGradient::<f64>::identity());
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for j in 0..3 {
            for m in 0..3 {
                for l in 0..3 {
                    for n in 0..3 {
                        assert_eq!(h[j][m][l][n], d(j, l) * d(m, n) - d(j, n) * d(m, l));
                    }
                }
            }
        }
    }

    #[test]
    fn hyper_cofactor_is_homogeneous_of_degree_one() {
        let g = DeformGradient::<f64>::new([[1.2, 0.3, -0.4], [0.1, 0.9, 0.2], [-0.3, 0.5, 1.7]]);
        let mut g2 = g;
        g2.g.iter_mut().flatten().for_each(|v| *v *= 2.0);
        let (h1, h2) = (hyper_cofactor(&g), hyper_cofactor(&g2));
        for (a, b) in h1.iter().flatten().flatten().flatten().zip(h2.iter().flatten().flatten().flatten()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_density_has_no_stress_or_potential() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let rho = vec![0.4; 30];
        let s = stress_eulerian_1d(&x, &rho, 1.0, 1.0, 4).unwrap();
        let v = quantum_potential_1d(&x, &rho, 1.0, 1.0, 4).unwrap();
        let u = internal_energy_1d(&x, &rho, 1.0, 1.0, 4).unwrap();
        assert!(s.max_abs_valid() < 1e-12 && v.max_abs_valid() < 1e-12 && u.max_abs_valid() < 1e-12);
    }

    #[test]
    fn gaussian_point_values() {
        // rho0 with sigma0 = 1: rho' = -x rho, rho'' = (x^2 - 1) rho.
        let rho = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let at = |x: f64| (rho(x), [-x * rho(x), 0.0, 0.0], (x * x - 1.0) * rho(x));
        let (r, g, l) = at(0.0);
        let mut hess = [[0.0; 3]; 3];
        hess[0][0] = l;
        let s = stress_eulerian_point(r, &g, &hess, 1.0, 1.0);
        assert!((s[0][0] - 0.0997356).abs() < 1e-7);
        assert!((quantum_potential_point(r, &g, l, 1.0, 1.0) - 0.25).abs() < 1e-15);
        let (r, g, l) = at(1.0);
        assert!((quantum_potential_point(r, &g, l, 1.0, 1.0) - 0.125).abs() < 1e-15);
        assert!((internal_energy_point(r, &g, 1.0, 1.0) - 0.125).abs() < 1e-15);
        assert!((quantum_potential_log_form::<f64>(-1.0, -1.0, 1.0, 1.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn product_density_energy_is_additive() {
        // rho = r1(x1) r2(x2) r3(x3): log-gradient splits by component.
        let (r1, r2, r3) = (0.3, 1.7, 0.05);
        let (d1, d2, d3) = (-0.2, 0.9, 0.011);
        let rho = r1 * r2 * r3;
        let grad = [d1 * r2 * r3, r1 * d2 * r3, r1 * r2 * d3];
        let u = internal_energy_point(rho, &grad, 1.3, 0.7);
        let one_d = |r: f64, d: f64| internal_energy_point(r, &[d, 0.0, 0.0], 1.3, 0.7);
        let sum = one_d(r1, d1) + one_d(r2, d2) + one_d(r3, d3);
        assert!((u - sum).abs() <= 1e-12 * u.abs());
    }

    #[test]
    fn stress_lagrangian_identity_map_reduces_to_eulerian() {
        let g = DeformGradient::with_derivatives(
            DeformGradient::<f64>::identity().g,
            [[[0.0; 3]; 3]; 3],
            [[[[0.0; 3]; 3]; 3]; 3],
        );
        let rho0 = 0.2;
        let grad = [0.05, -0.02, 0.01];
        let hess = [[-0.1, 0.01, 0.0], [0.01, -0.12, 0.02], [0.0, 0.02, -0.09]];
        let sl = stress_lagrangian(&g, rho0, &grad, &hess, 1.0, 1.0).unwrap();
        let se = stress_eulerian_point(rho0, &grad, &hess, 1.0, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((sl[i][j] - se[i][j]).abs() <= 1e-12);
            }
        }
        let uniform = stress_lagrangian(&g, rho0, &[0.0; 3], &[[0.0; 3]; 3], 1.0, 1.0).unwrap();
        assert!(max_abs_mat(&uniform) == 0.0);
    }

    #[test]
    fn stress_lagrangian_rejects_bad_inputs() {
        let mut g = DeformGradient::with_derivatives(
            DeformGradient::<f64>::identity().g,
            [[[0.0; 3]; 3]; 3],
            [[[[0.0; 3]; 3]; 3]; 3],
        );
        assert!(stress_lagrangian(&g, 0.0, &[0.0; 3], &[[0.0; 3]; 3], 1.0, 1.0).is_err());
        g.g[0][0] = -1.0;
        assert!(stress_lagrangian(&g, 1.0, &[0.0; 3], &[[0.0; 3]; 3], 1.0, 1.0).is_err());
        assert!(stress_lagrangian(&DeformGradient::<f64>::identity(), 1.0, &[0.0; 3], &[[0.0; 3]; 3], 1.0, 1.0).is_err());
    }

    #[test]
    fn masked_below_floor() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut rho = vec![1.0; 20];
        rho[10] = 0.0;
        let v = quantum_potential_1d(&x, &rho, 1.0, 1.0, 2).unwrap();
        assert!(!v.valid[10] && v.valid[0]);
        assert!(v.values.iter().all(|x| x.is_finite()));
    }
}
