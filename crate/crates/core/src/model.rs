//! Physical state types shared by every solver and the Madelung map between
//! the hydrodynamic pair (density, phase) and the complex wavefunction.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::interp::CubicHermite;
use crate::scalar::{max_abs, trapezoid, Real};
use crate::stencil::DerivativeOperator;

/// Relative tolerance on the trapezoid norm of an initial density.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Decomposition treats |psi| below this fraction of max|psi| as a node.
pub const NODE_FLOOR: f64 = 1e-12;

/// Initial density below this fraction of its peak is clamped in numeric
/// log-derivative ratios.
pub const LABEL_DENSITY_FLOOR: f64 = 1e-12;

/// Uniform 1D grid `start + i * step`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid<T> {
    pub start: T,
    pub step: T,
    pub len: usize,
}

impl<T: Real> UniformGrid<T> {
    /// `n` points from `min` to `max`, both included.
    pub fn linspace(min: T, max: T, n: usize) -> Result<Self> {
        if n < 2 || !(max > min) {
            return Err(Error::InvalidInput(format!(
                "grid needs n >= 2 and max > min (got n = {n}, [{min}, {max}])"
            )));
        }
        Ok(Self {
            start: min,
            step: (max - min) / T::from_usize_lossy(n - 1),
            len: n,
        })
    }

    /// `n` points on the periodic cell `[min, max)`.
    pub fn periodic(min: T, max: T, n: usize) -> Result<Self> {
        if n < 2 || !(max > min) {
            return Err(Error::InvalidInput(format!(
                "periodic grid needs n >= 2 and max > min (got n = {n}, [{min}, {max}))"
            )));
        }
        Ok(Self {
            start: min,
            step: (max - min) / T::from_usize_lossy(n),
            len: n,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.start + self.step * T::from_usize_lossy(i)
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.len).map(|i| self.x(i)).collect()
    }

    pub fn last(&self) -> T {
        self.x(self.len - 1)
    }

    /// Index of the grid point closest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: T) -> usize {
        let r = ((x - self.start) / self.step).round();
        if r <= T::zero() {
            0
        } else {
            r.to_usize().unwrap_or(usize::MAX).min(self.len - 1)
        }
    }

    pub fn same_as(&self, other: &Self) -> bool {
        let tol = T::lit(1e-9) * self.step.abs();
        self.len == other.len
            && (self.start - other.start).abs() <= tol
            && (self.step - other.step).abs() <= tol
    }
}

/// Tabulated external potential on a uniform grid. Values between nodes
/// come from a cubic Hermite interpolant with 4th-order nodal slopes.
#[derive(Debug, Clone)]
pub struct TabulatedPotential<T> {
    grid: UniformGrid<T>,
    values: Vec<T>,
    interp: CubicHermite<T>,
}

impl<T: Real> TabulatedPotential<T> {
    pub fn new(grid: UniformGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::GridMismatch(format!(
                "potential table has {} values for a grid of {} points",
                values.len(),
                grid.len
            )));
        }
        let x = grid.points();
        let slopes = DerivativeOperator::new(&x, 1, 4)?.apply(&values);
        let interp = CubicHermite::with_slopes(x, values.clone(), slopes)?;
        Ok(Self {
            grid,
            values,
            interp,
        })
    }

    pub fn grid(&self) -> &UniformGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Debug, Clone)]
pub enum Potential<T> {
    Free,
    /// `V = m omega^2 x^2 / 2`.
    Harmonic { omega: T },
    Tabulated(TabulatedPotential<T>),
}

#[derive(Debug, Clone)]
pub struct PhysicsParams<T> {
    pub hbar: T,
    pub mass: T,
    pub potential: Potential<T>,
}

impl<T: Real> PhysicsParams<T> {
    pub fn new(hbar: T, mass: T, potential: Potential<T>) -> Result<Self> {
        if !(hbar > T::zero()) || !hbar.is_finite() {
            return Err(Error::InvalidInput(format!("hbar must be > 0, got {hbar}")));
        }
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self {
            hbar,
            mass,
            potential,
        })
    }

    /// `hbar = m = 1`, no external potential.
    pub fn free_units() -> Self {
        Self {
            hbar: T::one(),
            mass: T::one(),
            potential: Potential::Free,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.potential, Potential::Free)
    }

    pub fn potential_at(&self, x: T) -> Result<T> {
        match &self.potential {
            Potential::Free => Ok(T::zero()),
            Potential::Harmonic { omega } => Ok(T::lit(0.5) * self.mass * *omega * *omega * x * x),
            Potential::Tabulated(tab) => tab
                .interp
                .eval(x)
                .ok_or(Error::PotentialOutOfRange { x: x.to_f64_lossy() }),
        }
    }

    /// dV/dx at `x`.
    pub fn potential_gradient(&self, x: T) -> Result<T> {
        match &self.potential {
            Potential::Free => Ok(T::zero()),
            Potential::Harmonic { omega } => Ok(self.mass * *omega * *omega * x),
            Potential::Tabulated(tab) => tab
                .interp
                .derivative(x)
                .ok_or(Error::PotentialOutOfRange { x: x.to_f64_lossy() }),
        }
    }

    /// Potential sampled on a uniform grid. A tabulated potential must be
    /// defined on exactly this grid.
    pub fn potential_on_grid(&self, grid: &UniformGrid<T>) -> Result<Vec<T>> {
        if let Potential::Tabulated(tab) = &self.potential {
            if !tab.grid.same_as(grid) {
                return Err(Error::GridMismatch(
                    "tabulated potential grid differs from the evaluation grid".into(),
                ));
            }
            return Ok(tab.values.clone());
        }
        grid.points().into_iter().map(|x| self.potential_at(x)).collect()
    }
}

/// Closed-form description of an initial state, used where analytic
/// derivatives avoid roundoff amplification in the density tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm<T> {
    /// `rho0 = norm * (2 pi sigma0^2)^(-1/2) exp(-a^2 / 2 sigma0^2)`,
    /// `S0 = momentum * a`.
    Gaussian { sigma0: T, momentum: T, norm: T },
}

impl<T: Real> ClosedForm<T> {
    pub fn rho0(&self, a: T) -> T {
        match *self {
            ClosedForm::Gaussian { sigma0, norm, .. } => {
                let s2 = sigma0 * sigma0;
                norm * (-(a * a) / (T::lit(2.0) * s2)).exp() / (T::lit(2.0) * T::PI() * s2).sqrt()
            }
        }
    }

    /// d(ln rho0)/da.
    pub fn log_rho0_d1(&self, a: T) -> T {
        match *self {
            ClosedForm::Gaussian { sigma0, .. } => -a / (sigma0 * sigma0),
        }
    }

    /// d^2(ln rho0)/da^2.
    pub fn log_rho0_d2(&self, _a: T) -> T {
        match *self {
            ClosedForm::Gaussian { sigma0, .. } => -T::one() / (sigma0 * sigma0),
        }
    }

    pub fn s0(&self, a: T) -> T {
        match *self {
            ClosedForm::Gaussian { momentum, .. } => momentum * a,
        }
    }

    pub fn s0_d1(&self, _a: T) -> T {
        match *self {
            ClosedForm::Gaussian { momentum, .. } => momentum,
        }
    }
}

/// Initial data on the label grid.
#[derive(Debug, Clone)]
pub struct InitialState<T> {
    pub labels: Vec<T>,
    pub rho0: Vec<T>,
    pub s0: Vec<T>,
    pub closed_form: Option<ClosedForm<T>>,
}

/// Label-derivatives of the initial data, in the forms the equation of
/// motion consumes.
#[derive(Debug, Clone)]
pub struct LabelDerivatives<T> {
    /// d(ln rho0)/da
    pub log_rho_d1: Vec<T>,
    /// d^2(ln rho0)/da^2
    pub log_rho_d2: Vec<T>,
    /// dS0/da
    pub s0_d1: Vec<T>,
}

impl<T: Real> InitialState<T> {
    /// Validates sampled initial data.
    pub fn new(labels: Vec<T>, rho0: Vec<T>, s0: Vec<T>) -> Result<Self> {
        let state = Self {
            labels,
            rho0,
            s0,
            closed_form: None,
        };
        state.validate()?;
        Ok(state)
    }

    /// Like [`InitialState::new`] but rescales `rho0` to unit trapezoid norm.
    pub fn normalized(labels: Vec<T>, mut rho0: Vec<T>, s0: Vec<T>) -> Result<Self> {
        if labels.len() != rho0.len() {
            return Err(Error::InvalidInput("labels and rho0 lengths differ".into()));
        }
        let norm = trapezoid(&labels, &rho0);
        if !(norm > T::zero()) {
            return Err(Error::InvalidInput("initial density has zero mass".into()));
        }
        rho0.iter_mut().for_each(|r| *r /= norm);
        Self::new(labels, rho0, s0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n < 2 || self.rho0.len() != n || self.s0.len() != n {
            return Err(Error::InvalidInput(format!(
                "initial state needs matching arrays of >= 2 labels (labels {n}, rho0 {}, S0 {})",
                self.rho0.len(),
                self.s0.len()
            )));
        }
        if let Some(i) = self.labels.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "labels not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = self.rho0.iter().position(|&r| !(r >= T::zero())) {
            return Err(Error::NegativeDensity {
                index: i,
                value: self.rho0[i].to_f64_lossy(),
            });
        }
        let norm = trapezoid(&self.labels, &self.rho0);
        if (norm - T::one()).abs() > T::lit(NORMALIZATION_TOLERANCE) {
            return Err(Error::InvalidInput(format!(
                "initial density trapezoid norm is {norm}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Drops the closed-form descriptor, forcing numeric label derivatives.
    pub fn without_closed_form(mut self) -> Self {
        self.closed_form = None;
        self
    }

    /// Label derivatives of ln rho0 and S0. Closed forms are used when
    /// present; otherwise finite differences at the given accuracy, with
    /// density ratios clamped at `LABEL_DENSITY_FLOOR * peak`.
    pub fn label_derivatives(&self, accuracy: usize) -> Result<LabelDerivatives<T>> {
        if let Some(cf) = &self.closed_form {
            return Ok(LabelDerivatives {
                log_rho_d1: self.labels.iter().map(|&a| cf.log_rho0_d1(a)).collect(),
                log_rho_d2: self.labels.iter().map(|&a| cf.log_rho0_d2(a)).collect(),
                s0_d1: self.labels.iter().map(|&a| cf.s0_d1(a)).collect(),
            });
        }
        let d1 = DerivativeOperator::new(&self.labels, 1, accuracy)?;
        let d2 = DerivativeOperator::new(&self.labels, 2, accuracy)?;
        let floor = max_abs(&self.rho0) * T::lit(LABEL_DENSITY_FLOOR);
        let r1 = d1.apply(&self.rho0);
        let r2 = d2.apply(&self.rho0);
        let mut log_rho_d1 = Vec::with_capacity(self.len());
        let mut log_rho_d2 = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let r = self.rho0[i].max(floor);
            let l1 = r1[i] / r;
            log_rho_d1.push(l1);
            log_rho_d2.push(r2[i] / r - l1 * l1);
        }
        Ok(LabelDerivatives {
            log_rho_d1,
            log_rho_d2,
            s0_d1: d1.apply(&self.s0),
        })
    }

    /// rho0 at an arbitrary label inside the grid.
    pub fn rho0_interpolant(&self) -> Result<LabelFunction<T>> {
        match self.closed_form {
            Some(cf) => Ok(LabelFunction::Closed(cf, LabelQuantity::Rho0)),
            None => Ok(LabelFunction::Sampled(CubicHermite::monotone(
                self.labels.clone(),
                self.rho0.clone(),
            )?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelQuantity {
    Rho0,
    S0,
}

/// A function of the label: closed form or interpolated samples.
#[derive(Debug, Clone)]
pub enum LabelFunction<T> {
    Closed(ClosedForm<T>, LabelQuantity),
    Sampled(CubicHermite<T>),
}

impl<T: Real> LabelFunction<T> {
    pub fn eval(&self, a: T) -> Option<T> {
        match self {
            LabelFunction::Closed(cf, LabelQuantity::Rho0) => Some(cf.rho0(a)),
            LabelFunction::Closed(cf, LabelQuantity::S0) => Some(cf.s0(a)),
            LabelFunction::Sampled(p) => p.eval(a),
        }
    }
}

/// Gaussian at rest centered on the origin.
pub fn make_gaussian_state<T: Real>(
    sigma0: T,
    params: &PhysicsParams<T>,
    labels: Vec<T>,
) -> Result<InitialState<T>> {
    make_boosted_gaussian_state(sigma0, T::zero(), params, labels)
}

/// Gaussian with uniform initial phase gradient, `S0 = hbar * k * a`.
pub fn make_boosted_gaussian_state<T: Real>(
    sigma0: T,
    wavenumber: T,
    params: &PhysicsParams<T>,
    labels: Vec<T>,
) -> Result<InitialState<T>> {
    if !(sigma0 > T::zero()) {
        return Err(Error::InvalidInput(format!("sigma0 must be > 0, got {sigma0}")));
    }
    let (lo, hi) = match (labels.first(), labels.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidInput("empty label grid".into())),
    };
    let four = T::lit(4.0) * sigma0;
    if lo > -four || hi < four {
        return Err(Error::InvalidInput(format!(
            "label domain [{lo}, {hi}] narrower than +-4 sigma0 = +-{four}; \
             normalization unattainable"
        )));
    }
    let momentum = params.hbar * wavenumber;
    let mut cf = ClosedForm::Gaussian {
        sigma0,
        momentum,
        norm: T::one(),
    };
    let raw: Vec<T> = labels.iter().map(|&a| cf.rho0(a)).collect();
    let norm = trapezoid(&labels, &raw);
    cf = ClosedForm::Gaussian {
        sigma0,
        momentum,
        norm: T::one() / norm,
    };
    let rho0 = labels.iter().map(|&a| cf.rho0(a)).collect();
    let s0 = labels.iter().map(|&a| cf.s0(a)).collect();
    let mut state = InitialState::new(labels, rho0, s0)?;
    state.closed_form = Some(cf);
    Ok(state)
}

/// Eulerian snapshot. Optional members are the presence flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianField<T> {
    pub t: T,
    pub x: Vec<T>,
    pub rho: Option<Vec<T>>,
    pub s: Option<Vec<T>>,
    pub v: Option<Vec<T>>,
    pub psi: Option<Vec<Complex<T>>>,
    /// Points covered by the trajectory image (or the nodeless region).
    pub support: Vec<bool>,
}

impl<T: Real> EulerianField<T> {
    pub fn empty(t: T, x: Vec<T>) -> Self {
        let n = x.len();
        Self {
            t,
            x,
            rho: None,
            s: None,
            v: None,
            psi: None,
            support: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Grid spacing, if the abscissa is uniform to 1e-9 relative.
    pub fn uniform_step(&self) -> Option<T> {
        if self.x.len() < 2 {
            return None;
        }
        let h = (self.x[self.x.len() - 1] - self.x[0]) / T::from_usize_lossy(self.x.len() - 1);
        let tol = T::lit(1e-9) * h.abs();
        self.x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
            .then_some(h)
    }

    pub fn support_count(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }
}

/// Lagrangian snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState<T> {
    pub t: T,
    pub labels: Vec<T>,
    pub q: Vec<T>,
    pub qdot: Vec<T>,
    /// Accumulated phase along each path (action units).
    pub chi: Vec<T>,
}

impl<T: Real> TrajectoryState<T> {
    /// Identity map with the given initial velocities.
    pub fn initial(labels: &[T], qdot: Vec<T>) -> Self {
        Self {
            t: T::zero(),
            labels: labels.to_vec(),
            q: labels.to_vec(),
            qdot,
            chi: vec![T::zero(); labels.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Smallest gap between neighbouring positions.
    pub fn min_spacing(&self) -> T {
        self.q
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::infinity(), |a, b| a.min(b))
    }

    pub fn is_monotone(&self) -> bool {
        self.q.windows(2).all(|w| w[1] > w[0])
    }
}

/// `psi = sqrt(rho) exp(i S / hbar)` pointwise.
pub fn assemble_wavefunction<T: Real>(rho: &[T], s: &[T], hbar: T) -> Result<Vec<Complex<T>>> {
    if rho.len() != s.len() {
        return Err(Error::InvalidInput("rho and S lengths differ".into()));
    }
    rho.iter()
        .zip(s)
        .enumerate()
        .map(|(i, (&r, &phase))| {
            if !(r >= T::zero()) {
                return Err(Error::NegativeDensity {
                    index: i,
                    value: r.to_f64_lossy(),
                });
            }
            Ok(Complex::from_polar(r.sqrt(), phase / hbar))
        })
        .collect()
}

/// Result of [`madelung_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Madelung<T> {
    pub rho: Vec<T>,
    pub s: Vec<T>,
    /// Contiguous region between the first and last point above the node floor.
    pub support: Vec<bool>,
}

/// Inverse of [`assemble_wavefunction`] for nodeless states.
///
/// The phase is pinned to the principal branch at `x_ref` and unwrapped
/// outward by nearest-branch continuation. Points outside the outermost
/// samples with |psi| above the node floor are left off the support; a
/// sub-floor sample strictly inside is a node and an error.
pub fn madelung_decompose<T: Real>(
    psi: &[Complex<T>],
    x: &[T],
    x_ref: usize,
    hbar: T,
) -> Result<Madelung<T>> {
    let n = psi.len();
    if x.len() != n {
        return Err(Error::InvalidInput("psi and x lengths differ".into()));
    }
    if x_ref >= n {
        return Err(Error::InvalidInput(format!(
            "reference index {x_ref} outside grid of {n} points"
        )));
    }
    let mag: Vec<T> = psi.iter().map(|z| z.norm()).collect();
    let floor = max_abs(&mag) * T::lit(NODE_FLOOR);
    let first = mag.iter().position(|&m| m > floor);
    let last = mag.iter().rposition(|&m| m > floor);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(Error::NodeEncountered {
                index: x_ref,
                x: x[x_ref].to_f64_lossy(),
                magnitude: 0.0,
            })
        }
    };
    for i in first..=last {
        if mag[i] <= floor {
            return Err(Error::NodeEncountered {
                index: i,
                x: x[i].to_f64_lossy(),
                magnitude: mag[i].to_f64_lossy(),
            });
        }
    }
    if x_ref < first || x_ref > last {
        return Err(Error::NodeEncountered {
            index: x_ref,
            x: x[x_ref].to_f64_lossy(),
            magnitude: mag[x_ref].to_f64_lossy(),
        });
    }

    let wrap = |d: T| {
        let two_pi = T::TAU();
        let mut w = d % two_pi;
        if w > T::PI() {
            w -= two_pi;
        } else if w <= -T::PI() {
            w += two_pi;
        }
        w
    };
    let arg: Vec<T> = psi.iter().map(|z| z.arg()).collect();
    let mut phase = vec![T::zero(); n];
    phase[x_ref] = arg[x_ref];
    for i in x_ref + 1..=last {
        phase[i] = phase[i - 1] + wrap(arg[i] - arg[i - 1]);
    }
    for i in (first..x_ref).rev() {
        phase[i] = phase[i + 1] + wrap(arg[i] - arg[i + 1]);
    }
    Ok(Madelung {
        rho: mag.iter().map(|&m| m * m).collect(),
        s: phase.into_iter().map(|p| p * hbar).collect(),
        support: (0..n).map(|i| i >= first && i <= last).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(span: f64, n: usize) -> Vec<f64> {
        UniformGrid::linspace(-span, span, n).unwrap().points()
    }

    #[test]
    fn gaussian_peak_and_phase() {
        let p = PhysicsParams::free_units();
        let st = make_gaussian_state(1.0, &p, labels(8.0, 401)).unwrap();
        assert!((st.rho0[200] - 0.3989423).abs() < 5e-8);
        assert!(st.s0.iter().all(|&s| s == 0.0));
        assert!((trapezoid(&st.labels, &st.rho0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_rejects_narrow_domain() {
        let p = PhysicsParams::free_units();
        let err = make_gaussian_state(1.0, &p, labels(3.9, 101)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(make_gaussian_state(1.0, &p, labels(4.0, 101)).is_ok());
    }

    #[test]
    fn params_validate() {
        assert!(PhysicsParams::new(0.0, 1.0, Potential::Free).is_err());
        assert!(PhysicsParams::new(1.0, -1.0, Potential::Free).is_err());
    }

    #[test]
    fn assemble_examples() {
        let psi = assemble_wavefunction(&[1.0], &[0.0], 1.0).unwrap();
        assert_eq!(psi[0], Complex::new(1.0, 0.0));
        let hbar = 0.7;
        let psi = assemble_wavefunction(&[0.25], &[std::f64::consts::PI * hbar], hbar).unwrap();
        assert!((psi[0] - Complex::new(-0.5, 0.0)).norm() < 1e-15);
        let err = assemble_wavefunction(&[0.1, -1e-3], &[0.0, 0.0], 1.0).unwrap_err();
        assert_eq!(err, Error::NegativeDensity { index: 1, value: -1e-3 });
    }

    #[test]
    fn decompose_plane_wave_gives_linear_phase() {
        let x = UniformGrid::<f64>::linspace(-3.0, 3.0, 301).unwrap().points();
        let psi: Vec<_> = x.iter().map(|&v| Complex::from_polar(1.0, v)).collect();
        let m = madelung_decompose(&psi, &x, 150, 1.0).unwrap();
        for (s, &xv) in m.s.iter().zip(&x) {
            assert!((s - xv).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_detects_node() {
        let x = UniformGrid::<f64>::linspace(-3.0, 3.0, 301).unwrap().points();
        // Real odd function with an exact zero at x = 0.
        let psi: Vec<_> = x
            .iter()
            .map(|&v| Complex::new(v * (-v * v).exp(), 0.0))
            .collect();
        let err = madelung_decompose(&psi, &x, 10, 1.0).unwrap_err();
        assert!(matches!(err, Error::NodeEncountered { index: 150, .. }));
    }

    #[test]
    fn decompose_tails_leave_support() {
        let x = UniformGrid::<f64>::linspace(-20.0, 20.0, 401).unwrap().points();
        let psi: Vec<_> = x.iter().map(|&v| Complex::new((-v * v / 4.0).exp(), 0.0)).collect();
        let m = madelung_decompose(&psi, &x, 200, 1.0).unwrap();
        assert!(!m.support[0] && !m.support[400] && m.support[200]);
    }

    proptest! {
        #[test]
        fn round_trip_up_to_global_phase(
            amp in proptest::collection::vec(0.05f64..2.0, 40),
            slope in -1.0f64..1.0,
            offset in -10.0f64..10.0,
            hbar in 0.2f64..3.0,
            x_ref in 0usize..40,
        ) {
            let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
            let s: Vec<f64> = x.iter().map(|&v| offset + slope * v * v).collect();
            let psi = assemble_wavefunction(&amp, &s, hbar).unwrap();
            let m = madelung_decompose(&psi, &x, x_ref, hbar).unwrap();
            let c = m.s[0] - s[0];
            for i in 0..40 {
                prop_assert!((m.rho[i] - amp[i]).abs() <= 1e-10 * amp[i].max(1.0));
                prop_assert!((m.s[i] - s[i] - c).abs() <= 1e-10);
            }
            prop_assert!(m.s[x_ref] / hbar > -std::f64::consts::PI - 1e-12);
            prop_assert!(m.s[x_ref] / hbar <= std::f64::consts::PI + 1e-12);
            let back = assemble_wavefunction(&m.rho, &m.s, hbar).unwrap();
            let phase = Complex::from_polar(1.0, -c / hbar);
            for i in 0..40 {
                prop_assert!((back[i] * phase - psi[i]).norm() <= 1e-10);
            }
        }

        #[test]
        fn gaussian_normalized_for_any_width(sigma0 in 0.25f64..4.0) {
            let p = PhysicsParams::free_units();
            let st = make_gaussian_state(sigma0, &p, labels(8.0 * sigma0, 801)).unwrap();
            prop_assert!((trapezoid(&st.labels, &st.rho0) - 1.0).abs() <= 1e-8);
            prop_assert!(st.rho0.iter().all(|&r| r >= 0.0));
        }
    }
}
