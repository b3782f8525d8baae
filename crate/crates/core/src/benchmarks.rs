//! Closed-form free-Gaussian solutions and error norms.
//!
//! The spreading Gaussian is the one problem where paths, density and phase
//! are all known exactly. With `alpha = (hbar / 2 m sigma0^2)^2` and
//! `T(t) = sqrt(1 + alpha t^2)`, every label moves on `q = a T(t)` (plus a
//! uniform drift `v t` for a boosted packet).
//!
//! The phase carries a quadratic term `m alpha t x^2 sigma0^2 / (2 sigma^2)`.
//! Without the factor `t` the expression is not an action and fails the
//! quantum Hamilton-Jacobi equation; [`gaussian_phase_without_time_factor`]
//! keeps that variant around so tests can demonstrate the failure.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{EulerianField, PhysicsParams};
use crate::scalar::{trapezoid_weights, Real};

/// `alpha = (hbar / 2 m sigma0^2)^2`.
pub fn spreading_rate<T: Real>(sigma0: T, params: &PhysicsParams<T>) -> T {
    let r = params.hbar / (T::lit(2.0) * params.mass * sigma0 * sigma0);
    r * r
}

/// Free Gaussian packet with initial width `sigma0` and wavenumber `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket<T> {
    pub sigma0: T,
    pub wavenumber: T,
    pub hbar: T,
    pub mass: T,
}

impl<T: Real> GaussianPacket<T> {
    pub fn at_rest(sigma0: T, params: &PhysicsParams<T>) -> Self {
        Self::boosted(sigma0, T::zero(), params)
    }

    pub fn boosted(sigma0: T, wavenumber: T, params: &PhysicsParams<T>) -> Self {
        Self {
            sigma0,
            wavenumber,
            hbar: params.hbar,
            mass: params.mass,
        }
    }

    pub fn alpha(&self) -> T {
        let r = self.hbar / (T::lit(2.0) * self.mass * self.sigma0 * self.sigma0);
        r * r
    }

    /// Group velocity `hbar k / m`.
    pub fn drift(&self) -> T {
        self.hbar * self.wavenumber / self.mass
    }

    /// Width at time `t`.
    pub fn sigma(&self, t: T) -> T {
        self.sigma0 * (T::one() + self.alpha() * t * t).sqrt()
    }

    /// Path and velocity of the element labelled `a`.
    pub fn trajectory(&self, a: T, t: T) -> (T, T) {
        let alpha = self.alpha();
        let stretch = (T::one() + alpha * t * t).sqrt();
        (
            a * stretch + self.drift() * t,
            a * alpha * t / stretch + self.drift(),
        )
    }

    /// Density and phase at `(x, t)`.
    pub fn density_phase(&self, x: T, t: T) -> (T, T) {
        let (two, half) = (T::lit(2.0), T::lit(0.5));
        let alpha = self.alpha();
        let s2 = self.sigma0 * self.sigma0 * (T::one() + alpha * t * t);
        let v = self.drift();
        let xi = x - v * t;
        let rho = (-(xi * xi) / (two * s2)).exp() / (two * T::PI() * s2).sqrt();
        let spread = half * self.mass * alpha * t * xi * xi * self.sigma0 * self.sigma0 / s2;
        let gouy = half * self.hbar
            * (self.hbar * t / (two * self.mass * self.sigma0 * self.sigma0)).atan();
        let galilean = self.mass * v * x - half * self.mass * v * v * t;
        (rho, spread - gouy + galilean)
    }

    pub fn velocity(&self, x: T, t: T) -> T {
        let alpha = self.alpha();
        let v = self.drift();
        v + (x - v * t) * alpha * t / (T::one() + alpha * t * t)
    }

    /// `hbar^2 / (4 m sigma^2) (1 - xi^2 / 2 sigma^2)`.
    pub fn quantum_potential(&self, x: T, t: T) -> T {
        let s2 = self.sigma(t).powi(2);
        let xi = x - self.drift() * t;
        self.hbar * self.hbar / (T::lit(4.0) * self.mass * s2)
            * (T::one() - xi * xi / (T::lit(2.0) * s2))
    }

    pub fn wavefunction(&self, x: T, t: T) -> Complex<T> {
        let (rho, s) = self.density_phase(x, t);
        Complex::from_polar(rho.sqrt(), s / self.hbar)
    }

    /// Quantum Hamilton-Jacobi residual `dS/dt + (dS/dx)^2/2m + V_Q`,
    /// with every derivative taken analytically.
    pub fn qhj_residual(&self, x: T, t: T) -> T {
        let (half, two) = (T::lit(0.5), T::lit(2.0));
        let (m, hb) = (self.mass, self.hbar);
        let alpha = self.alpha();
        let v = self.drift();
        let d = T::one() + alpha * t * t;
        let xi = x - v * t;
        let tau_rate = hb / (two * m * self.sigma0 * self.sigma0);
        let tau = tau_rate * t;
        let ds_dt = half * m * alpha * xi * xi * (T::one() - alpha * t * t) / (d * d)
            - m * alpha * t * xi * v / d
            - half * hb * tau_rate / (T::one() + tau * tau)
            - half * m * v * v;
        let ds_dx = m * alpha * t * xi / d + m * v;
        ds_dt + ds_dx * ds_dx / (two * m) + self.quantum_potential(x, t)
    }

    /// Samples density, phase, velocity and wavefunction on `x`.
    pub fn field(&self, x: &[T], t: T) -> EulerianField<T> {
        let mut f = EulerianField::empty(t, x.to_vec());
        let (rho, s): (Vec<T>, Vec<T>) = x.iter().map(|&xi| self.density_phase(xi, t)).unzip();
        f.v = Some(x.iter().map(|&xi| self.velocity(xi, t)).collect());
        f.psi = Some(
            rho.iter()
                .zip(&s)
                .map(|(&r, &p)| Complex::from_polar(r.sqrt(), p / self.hbar))
                .collect(),
        );
        f.rho = Some(rho);
        f.s = Some(s);
        f
    }
}

/// Path and velocity of label `a` for a free Gaussian initially at rest.
pub fn gaussian_trajectory<T: Real>(a: T, t: T, sigma0: T, params: &PhysicsParams<T>) -> (T, T) {
    GaussianPacket::at_rest(sigma0, params).trajectory(a, t)
}

/// Density and phase of a free Gaussian initially at rest.
pub fn gaussian_wavefunction<T: Real>(x: T, t: T, sigma0: T, params: &PhysicsParams<T>) -> (T, T) {
    GaussianPacket::at_rest(sigma0, params).density_phase(x, t)
}

/// The phase with the quadratic term lacking its time factor:
/// `m alpha x^2 sigma0^2 / (2 sigma^2) - (hbar/2) atan(hbar t / 2 m sigma0^2)`.
/// Kept only to show that it violates the Hamilton-Jacobi equation.
pub fn gaussian_phase_without_time_factor<T: Real>(
    x: T,
    t: T,
    sigma0: T,
    params: &PhysicsParams<T>,
) -> T {
    let (half, two) = (T::lit(0.5), T::lit(2.0));
    let alpha = spreading_rate(sigma0, params);
    let s2 = sigma0 * sigma0 * (T::one() + alpha * t * t);
    half * params.mass * alpha * x * x * sigma0 * sigma0 / s2
        - half * params.hbar * (params.hbar * t / (two * params.mass * sigma0 * sigma0)).atan()
}

/// Residual of `T'' = alpha / T^3` for `T = sqrt(1 + alpha t^2)`, with `T''`
/// from direct differentiation (`alpha / T - alpha^2 t^2 / T^3`).
pub fn ode_check_t<T: Real>(t: T, alpha: T) -> T {
    let stretch = (T::one() + alpha * t * t).sqrt();
    let t3 = stretch * stretch * stretch;
    let second = alpha / stretch - alpha * alpha * t * t / t3;
    second - alpha / t3
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms<T> {
    pub l2: T,
    pub linf: T,
    /// L2 after removing the best global phase; `None` for real fields.
    pub l2_phase_reduced: Option<T>,
    /// Optimal global phase `arg sum w A conj(B)` (B is rotated by it).
    pub phase: Option<T>,
}

fn masked_weights<T: Real>(x: &[T], mask: &[bool], n: usize) -> Result<Vec<T>> {
    if x.len() != n || mask.len() != n {
        return Err(Error::GridMismatch(format!(
            "fields of length {n} compared on grid {} with mask {}",
            x.len(),
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let mut w = trapezoid_weights(x);
    for (wi, &m) in w.iter_mut().zip(mask) {
        if !m {
            *wi = T::zero();
        }
    }
    Ok(w)
}

/// Quadrature-weighted L2 and max norms of `a - b` over the masked support.
pub fn error_norms_real<T: Real>(a: &[T], b: &[T], x: &[T], mask: &[bool]) -> Result<ErrorNorms<T>> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch("compared fields differ in length".into()));
    }
    let w = masked_weights(x, mask, a.len())?;
    let mut l2 = T::zero();
    let mut linf = T::zero();
    for i in 0..a.len() {
        if mask[i] {
            let d = (a[i] - b[i]).abs();
            l2 += w[i] * d * d;
            linf = linf.max(d);
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        linf,
        l2_phase_reduced: None,
        phase: None,
    })
}

/// As [`error_norms_real`], plus the L2 distance minimised over one global
/// phase factor applied to `b`.
pub fn error_norms_complex<T: Real>(
    a: &[Complex<T>],
    b: &[Complex<T>],
    x: &[T],
    mask: &[bool],
) -> Result<ErrorNorms<T>> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch("compared fields differ in length".into()));
    }
    let w = masked_weights(x, mask, a.len())?;
    let mut l2 = T::zero();
    let mut linf = T::zero();
    let mut overlap = Complex::new(T::zero(), T::zero());
    for i in 0..a.len() {
        if mask[i] {
            let d = (a[i] - b[i]).norm();
            l2 += w[i] * d * d;
            linf = linf.max(d);
            overlap += a[i] * b[i].conj() * w[i];
        }
    }
    let phi = if overlap.norm() > T::zero() { overlap.arg() } else { T::zero() };
    let rot = Complex::from_polar(T::one(), phi);
    let mut reduced = T::zero();
    for i in 0..a.len() {
        if mask[i] {
            reduced += w[i] * (a[i] - b[i] * rot).norm_sqr();
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        linf,
        l2_phase_reduced: Some(reduced.sqrt()),
        phase: Some(phi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicsParams;

    fn unit() -> PhysicsParams<f64> {
        PhysicsParams::free_units()
    }

    #[test]
    fn trajectory_examples() {
        assert_eq!(gaussian_trajectory(1.0, 0.0, 1.0, &unit()), (1.0, 0.0));
        let (q, _) = gaussian_trajectory(1.0, 2.0, 1.0, &unit());
        assert!((q - 1.4142136).abs() < 1e-7);
        for t in [0.0, 0.5, 3.0, 10.0] {
            assert_eq!(gaussian_trajectory(0.0, t, 1.0, &unit()).0, 0.0);
        }
    }

    #[test]
    fn wavefunction_examples() {
        let (rho, s) = gaussian_wavefunction(0.3, 0.0, 1.0, &unit());
        assert!((rho - (-0.045f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(s, 0.0);
        let (rho, _) = gaussian_wavefunction(0.0, 2.0, 1.0, &unit());
        assert!((rho - 0.2820948).abs() < 1e-7);
        // v = x/4 at t = 2, so S(1) - S(0) = 1/8 and S(0) = -atan(1)/2.
        let (_, s1) = gaussian_wavefunction(1.0, 2.0, 1.0, &unit());
        assert!((s1 - (0.125 - std::f64::consts::PI / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn analytic_qhj_residual_vanishes() {
        let p = PhysicsParams::<f64>::new(0.7, 1.9, crate::model::Potential::Free).unwrap();
        for k in [0.0, 1.3] {
            let g = GaussianPacket::boosted(0.8, k, &p);
            for &(x, t) in &[(0.0, 0.0), (1.0, 2.0), (-2.5, 0.7), (3.0, 5.0)] {
                assert!(g.qhj_residual(x, t).abs() < 1e-12, "k={k} x={x} t={t}");
            }
        }
    }

    #[test]
    fn phase_gradient_matches_velocity() {
        let g = GaussianPacket::boosted(1.0, 0.6, &unit());
        let h = 1e-5;
        for &(x, t) in &[(0.4, 1.0), (-1.0, 2.5)] {
            let ds = (g.density_phase(x + h, t).1 - g.density_phase(x - h, t).1) / (2.0 * h);
            assert!((ds / g.mass - g.velocity(x, t)).abs() < 1e-9);
        }
    }

    #[test]
    fn pushforward_of_initial_density_matches_closed_form() {
        let g = GaussianPacket::at_rest(1.0, &unit());
        let alpha: f64 = g.alpha();
        for &t in &[0.5, 2.0, 4.0] {
            let stretch = (1.0 + alpha * t * t).sqrt();
            for &a in &[-3.0, -0.2, 0.0, 1.5] {
                let (q, _) = g.trajectory(a, t);
                let pushed = g.density_phase(a, 0.0).0 / stretch;
                assert!((pushed - g.density_phase(q, t).0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ode_residuals() {
        for &(t, a) in &[(0.0, 0.25), (2.0, 0.25), (7.0, 3.0), (1.0, 0.0)] {
            assert!(ode_check_t::<f64>(t, a).abs() < 1e-12);
        }
        let stretch = 2.0f64.sqrt();
        assert!((0.25 / stretch.powi(3) - 0.0883883).abs() < 1e-7);
    }

    #[test]
    fn norms_examples() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let mask = vec![true; 101];
        let a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v.sin(), v)).collect();
        let n = error_norms_complex(&a, &a, &x, &mask).unwrap();
        assert_eq!((n.l2, n.linf, n.l2_phase_reduced), (0.0, 0.0, Some(0.0)));
        let rot = Complex::from_polar(1.0, 2.1);
        let b: Vec<_> = a.iter().map(|z| z * rot).collect();
        assert!(error_norms_complex(&a, &b, &x, &mask).unwrap().l2_phase_reduced.unwrap() < 1e-14);
        let zeros = vec![0.0; 101];
        let ones = vec![1.0; 101];
        let n = error_norms_real(&zeros, &ones, &x, &mask).unwrap();
        assert!((n.l2 - 1.0).abs() < 1e-14 && n.linf == 1.0);
        assert_eq!(
            error_norms_real(&zeros, &ones, &x, &vec![false; 101]).unwrap_err(),
            Error::EmptyMask
        );
    }
}
