//! Quantum trajectory method: particles carrying `c = ln rho` and `S`
//! along the flow, with spatial derivatives from moving weighted least
//! squares over neighbouring particles.
//!
//! Along a path `dx/dt = S'/m`, `dc/dt = -S''/m` and
//! `dS/dt = S'^2/2m - V - V_Q`, with
//! `V_Q = -(hbar^2/2m)(c''/2 + c'^2/4)`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lagrangian::TimeStep;
use crate::model::{InitialState, PhysicsParams};
use crate::scalar::{trapezoid_weights, Real};

pub const DEFAULT_DEGREE: usize = 4;
pub const DEFAULT_STENCIL: usize = 9;
/// Gaussian weight width in units of the local particle spacing.
pub const DEFAULT_WEIGHT_WIDTH: f64 = 3.0;

/// Particles below this count are fitted sequentially.
const PARALLEL_THRESHOLD: usize = 256;

/// First and second derivative weights at every particle.
#[derive(Debug, Clone)]
pub struct MwlsOperator<T> {
    rows: Vec<MwlsRow<T>>,
}

#[derive(Debug, Clone)]
struct MwlsRow<T> {
    start: usize,
    d1: Vec<T>,
    d2: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MwlsDerivatives<T> {
    pub d1: Vec<T>,
    pub d2: Vec<T>,
}

impl<T: Real> MwlsOperator<T> {
    /// Fits over the `stencil` nearest particles (a contiguous window in
    /// 1D) with weights `exp(-(dx / (width h))^2 / 2)`, `h` the mean spacing
    /// inside the window.
    pub fn new(positions: &[T], degree: usize, stencil: usize, width: T) -> Result<Self> {
        let n = positions.len();
        if degree < 2 {
            return Err(Error::InvalidInput("second derivatives need degree >= 2".into()));
        }
        if stencil < degree + 1 {
            return Err(Error::InvalidInput(format!(
                "stencil of {stencil} cannot fit degree {degree}"
            )));
        }
        if n < stencil {
            return Err(Error::InvalidInput(format!(
                "{n} particles are fewer than the stencil size {stencil}"
            )));
        }
        if !(width > T::zero()) {
            return Err(Error::InvalidInput("weight width must be positive".into()));
        }
        if let Some(i) = positions.windows(2).position(|w| w[1] == w[0]) {
            return Err(Error::InvalidInput(format!(
                "particles {i} and {} share a position",
                i + 1
            )));
        }
        if let Some(i) = positions.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(format!(
                "positions are not increasing at particle {}",
                i + 1
            )));
        }
        let fit = |i: usize| fit_row(positions, i, degree, stencil, width);
        let rows = if n >= PARALLEL_THRESHOLD {
            (0..n).into_par_iter().map(fit).collect::<Result<Vec<_>>>()?
        } else {
            (0..n).map(fit).collect::<Result<Vec<_>>>()?
        };
        Ok(Self { rows })
    }

    pub fn apply(&self, values: &[T]) -> MwlsDerivatives<T> {
        assert_eq!(values.len(), self.rows.len(), "one value per particle");
        let dot = |w: &[T], start: usize| {
            w.iter()
                .zip(&values[start..start + w.len()])
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
        };
        MwlsDerivatives {
            d1: self.rows.iter().map(|r| dot(&r.d1, r.start)).collect(),
            d2: self.rows.iter().map(|r| dot(&r.d2, r.start)).collect(),
        }
    }
}

fn fit_row<T: Real>(x: &[T], i: usize, degree: usize, stencil: usize, width: T) -> Result<MwlsRow<T>> {
    let n = x.len();
    let start = i.saturating_sub(stencil / 2).min(n - stencil);
    let xs = &x[start..start + stencil];
    let h = (xs[stencil - 1] - xs[0]) / T::from_usize_lossy(stencil - 1);
    let cols = degree + 1;
    // sqrt(w) V with the abscissa scaled by h
    let sw: Vec<T> = xs
        .iter()
        .map(|&xj| {
            let r = (xj - x[i]) / (width * h);
            (-(r * r) * T::lit(0.5)).exp()
        })
        .collect();
    let mut q = vec![vec![T::zero(); stencil]; cols];
    for (j, &xj) in xs.iter().enumerate() {
        let s = (xj - x[i]) / h;
        let mut p = sw[j];
        for col in q.iter_mut() {
            col[j] = p;
            p *= s;
        }
    }
    // modified Gram-Schmidt, twice for orthogonality
    let mut r = vec![vec![T::zero(); cols]; cols];
    for k in 0..cols {
        let norm0 = q[k].iter().map(|&v| v * v).sum::<T>().sqrt();
        for _ in 0..2 {
            for m in 0..k {
                let proj: T = q[m].iter().zip(&q[k]).map(|(&a, &b)| a * b).sum();
                r[m][k] += proj;
                let qm = q[m].clone();
                for (v, a) in q[k].iter_mut().zip(qm) {
                    *v -= proj * a;
                }
            }
        }
        let nk = q[k].iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(nk > T::lit(1e-10) * norm0) {
            return Err(Error::RankDeficient { particle: i });
        }
        r[k][k] = nk;
        for v in q[k].iter_mut() {
            *v /= nk;
        }
    }
    // coefficient k = e_k^T R^-1 Q^T sqrt(W) f; row = sqrt(w) * Q y, R^T y = e_k
    let row = |k: usize| {
        let mut y = vec![T::zero(); cols];
        for a in 0..cols {
            let mut acc = if a == k { T::one() } else { T::zero() };
            for b in 0..a {
                acc -= r[b][a] * y[b];
            }
            y[a] = acc / r[a][a];
        }
        (0..stencil)
            .map(|j| sw[j] * (0..cols).map(|a| q[a][j] * y[a]).sum::<T>())
            .collect::<Vec<T>>()
    };
    let d1 = row(1).into_iter().map(|w| w / h).collect();
    let d2 = row(2)
        .into_iter()
        .map(|w| T::lit(2.0) * w / (h * h))
        .collect();
    Ok(MwlsRow { start, d1, d2 })
}

/// First and second derivatives of `values` at every particle.
pub fn mwls_derivatives<T: Real>(
    positions: &[T],
    values: &[T],
    degree: usize,
    stencil: usize,
) -> Result<MwlsDerivatives<T>> {
    if positions.len() != values.len() {
        return Err(Error::InvalidInput("one value per particle required".into()));
    }
    Ok(MwlsOperator::new(positions, degree, stencil, T::lit(DEFAULT_WEIGHT_WIDTH))?.apply(values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<T> {
    pub t: T,
    pub positions: Vec<T>,
    /// `ln rho` at each particle.
    pub log_density: Vec<T>,
    pub phase: Vec<T>,
    /// Probability carried by each particle, `rho0 da`.
    pub weights: Vec<T>,
}

impl<T: Real> ParticleSet<T> {
    /// Particles at the labels with `c = ln rho0` and `S = S0`.
    pub fn seed(init: &InitialState<T>) -> Result<Self> {
        init.validate()?;
        if let Some(i) = init.rho0.iter().position(|&r| !(r > T::zero())) {
            return Err(Error::InvalidInput(format!("label {i} has zero density")));
        }
        let w = trapezoid_weights(&init.labels);
        Ok(Self {
            t: T::zero(),
            positions: init.labels.clone(),
            log_density: init.rho0.iter().map(|r| r.ln()).collect(),
            phase: init.s0.clone(),
            weights: w.iter().zip(&init.rho0).map(|(&a, &b)| a * b).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn density(&self) -> Vec<T> {
        self.log_density.iter().map(|c| c.exp()).collect()
    }

    /// `psi = exp(c/2 + i S/hbar)` at each particle.
    pub fn psi(&self, hbar: T) -> Vec<Complex<T>> {
        let half = T::lit(0.5);
        self.log_density
            .iter()
            .zip(&self.phase)
            .map(|(&c, &s)| Complex::from_polar((half * c).exp(), s / hbar))
            .collect()
    }

    /// Trapezoid norm `sum exp(c) dx` over the current positions.
    pub fn norm(&self) -> T {
        trapezoid_weights(&self.positions)
            .iter()
            .zip(&self.log_density)
            .map(|(&w, &c)| w * c.exp())
            .sum()
    }

    /// Largest relative gap between `exp(c)` and the carried mass spread
    /// over the current spacing, on particles away from the ends.
    pub fn density_route_gap(&self, margin: usize) -> T {
        let n = self.len();
        let dx = trapezoid_weights(&self.positions);
        let rho = self.density();
        let peak = rho.iter().fold(T::zero(), |m, &r| m.max(r));
        (margin..n.saturating_sub(margin))
            .map(|i| (self.weights[i] / dx[i] - rho[i]).abs() / peak)
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QtmConfig<T> {
    pub dt: TimeStep<T>,
    pub cfl_coefficient: T,
    pub t_final: T,
    pub degree: usize,
    pub stencil: usize,
    pub weight_width: T,
    pub snapshot_stride: usize,
}

impl<T: Real> Default for QtmConfig<T> {
    fn default() -> Self {
        Self {
            dt: TimeStep::Auto,
            cfl_coefficient: T::lit(0.1),
            t_final: T::one(),
            degree: DEFAULT_DEGREE,
            stencil: DEFAULT_STENCIL,
            weight_width: T::lit(DEFAULT_WEIGHT_WIDTH),
            snapshot_stride: 100,
        }
    }
}

impl<T: Real> QtmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.cfl_coefficient > T::zero()) {
            return Err(Error::InvalidInput("cfl_coefficient must be positive".into()));
        }
        if !(self.t_final >= T::zero()) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput("t_final must be non-negative".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidInput("snapshot_stride must be at least 1".into()));
        }
        if self.degree < 2 || self.stencil < self.degree + 1 {
            return Err(Error::InvalidInput(format!(
                "degree {} with stencil {} cannot give second derivatives",
                self.degree, self.stencil
            )));
        }
        if !(self.weight_width > T::zero()) {
            return Err(Error::InvalidInput("weight_width must be positive".into()));
        }
        Ok(())
    }

    fn resolve_step(&self, positions: &[T], params: &PhysicsParams<T>) -> (T, usize) {
        if self.t_final == T::zero() {
            return (T::zero(), 0);
        }
        let target = match self.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => {
                let dx = positions
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(T::infinity(), T::min);
                self.cfl_coefficient * dx * dx * params.mass / params.hbar
            }
        };
        let steps = (self.t_final / target).ceil().to_usize().unwrap_or(1).max(1);
        (self.t_final / T::from_usize_lossy(steps), steps)
    }
}

#[derive(Debug, Clone)]
pub struct QtmRun<T> {
    pub snapshots: Vec<ParticleSet<T>>,
    pub dt: T,
    pub steps_taken: usize,
    pub abort: Option<Error>,
}

impl<T: Real> QtmRun<T> {
    pub fn last(&self) -> &ParticleSet<T> {
        self.snapshots.last().expect("a run keeps at least the seeded state")
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.abort {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    /// `psi` along the paths at every snapshot.
    pub fn psi_history(&self, hbar: T) -> Vec<(T, Vec<Complex<T>>)> {
        self.snapshots.iter().map(|s| (s.t, s.psi(hbar))).collect()
    }
}

struct Rates<T> {
    x: Vec<T>,
    c: Vec<T>,
    s: Vec<T>,
}

fn rates<T: Real>(
    x: &[T],
    c: &[T],
    s: &[T],
    params: &PhysicsParams<T>,
    cfg: &QtmConfig<T>,
) -> Result<Rates<T>> {
    let op = MwlsOperator::new(x, cfg.degree, cfg.stencil, cfg.weight_width)?;
    let dc = op.apply(c);
    let ds = op.apply(s);
    let (hbar, m) = (params.hbar, params.mass);
    let (half, quarter) = (T::lit(0.5), T::lit(0.25));
    let n = x.len();
    let mut out = Rates {
        x: vec![T::zero(); n],
        c: vec![T::zero(); n],
        s: vec![T::zero(); n],
    };
    for i in 0..n {
        let v = ds.d1[i] / m;
        let vq = -hbar * hbar / (T::lit(2.0) * m) * (half * dc.d2[i] + quarter * dc.d1[i] * dc.d1[i]);
        out.x[i] = v;
        out.c[i] = -ds.d2[i] / m;
        out.s[i] = half * m * v * v - params.potential_at(x[i])? - vq;
    }
    Ok(out)
}

fn rk4_step<T: Real>(
    p: &ParticleSet<T>,
    dt: T,
    params: &PhysicsParams<T>,
    cfg: &QtmConfig<T>,
) -> Result<ParticleSet<T>> {
    let half = T::lit(0.5);
    let n = p.len();
    let shifted = |base: &[T], k: &[T], h: T| -> Vec<T> {
        base.iter().zip(k).map(|(&b, &d)| b + h * d).collect()
    };
    let k1 = rates(&p.positions, &p.log_density, &p.phase, params, cfg)?;
    let k2 = rates(
        &shifted(&p.positions, &k1.x, half * dt),
        &shifted(&p.log_density, &k1.c, half * dt),
        &shifted(&p.phase, &k1.s, half * dt),
        params,
        cfg,
    )?;
    let k3 = rates(
        &shifted(&p.positions, &k2.x, half * dt),
        &shifted(&p.log_density, &k2.c, half * dt),
        &shifted(&p.phase, &k2.s, half * dt),
        params,
        cfg,
    )?;
    let k4 = rates(
        &shifted(&p.positions, &k3.x, dt),
        &shifted(&p.log_density, &k3.c, dt),
        &shifted(&p.phase, &k3.s, dt),
        params,
        cfg,
    )?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let combine = |base: &[T], a: &[T], b: &[T], c: &[T], d: &[T]| -> Vec<T> {
        (0..n)
            .map(|i| base[i] + sixth * (a[i] + two * (b[i] + c[i]) + d[i]))
            .collect()
    };
    Ok(ParticleSet {
        t: p.t + dt,
        positions: combine(&p.positions, &k1.x, &k2.x, &k3.x, &k4.x),
        log_density: combine(&p.log_density, &k1.c, &k2.c, &k3.c, &k4.c),
        phase: combine(&p.phase, &k1.s, &k2.s, &k3.s, &k4.s),
        weights: p.weights.clone(),
    })
}

/// Advances particles seeded on the labels of `init` with RK4. A crossing
/// (or a degenerate fit) stops the run and is returned in `abort`, with
/// the snapshots recorded so far.
pub fn qtm_evolve<T: Real>(
    init: &InitialState<T>,
    params: &PhysicsParams<T>,
    config: &QtmConfig<T>,
) -> Result<QtmRun<T>> {
    config.validate()?;
    let mut state = ParticleSet::seed(init)?;
    if state.len() < config.stencil {
        return Err(Error::InvalidInput(format!(
            "{} particles are fewer than the stencil size {}",
            state.len(),
            config.stencil
        )));
    }
    let (dt, steps) = config.resolve_step(&state.positions, params);
    let mut run = QtmRun {
        snapshots: vec![state.clone()],
        dt,
        steps_taken: 0,
        abort: None,
    };
    for step in 1..=steps {
        let mut next = match rk4_step(&state, dt, params, config) {
            Ok(s) => s,
            Err(e) => {
                run.abort = Some(match e {
                    Error::InvalidInput(_) => Error::ParticleCrossing {
                        index: first_crossing(&state.positions).unwrap_or(0),
                        t: state.t.to_f64_lossy(),
                    },
                    other => other,
                });
                return Ok(run);
            }
        };
        next.t = if step == steps { config.t_final } else { dt * T::from_usize_lossy(step) };
        if let Some(i) = first_crossing(&next.positions) {
            run.abort = Some(Error::ParticleCrossing {
                index: i,
                t: next.t.to_f64_lossy(),
            });
            return Ok(run);
        }
        state = next;
        run.steps_taken = step;
        if step % config.snapshot_stride == 0 || step == steps {
            run.snapshots.push(state.clone());
        }
    }
    Ok(run)
}

fn first_crossing<T: Real>(x: &[T]) -> Option<usize> {
    x.windows(2).position(|w| !(w[1] > w[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gaussian_state, UniformGrid};
    use proptest::prelude::*;

    #[test]
    fn reproduces_quadratics() {
        let x: Vec<f64> = (0..20).map(|i| 0.3 * i as f64 + 0.01 * (i as f64).sin()).collect();
        let f: Vec<f64> = x.iter().map(|v| v * v).collect();
        let d = mwls_derivatives(&x, &f, 4, 9).unwrap();
        for i in 0..x.len() {
            assert!((d.d2[i] - 2.0).abs() < 1e-9, "{}", d.d2[i]);
            assert!((d.d1[i] - 2.0 * x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn sine_first_derivative() {
        let max_err = |h: f64| {
            let n = (10.0 / h) as usize;
            let x: Vec<f64> = (0..n).map(|i| h * i as f64).collect();
            let f: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            let d = mwls_derivatives(&x, &f, 4, 9).unwrap();
            x.iter()
                .zip(&d.d1)
                .map(|(x, d)| (d - x.cos()).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (max_err(0.05), max_err(0.025));
        assert!(coarse < 2e-5, "{coarse:e}");
        let order = (coarse / fine).log2();
        assert!(order > 3.7, "order {order}");

        let x: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        let f: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let d = mwls_derivatives(&x, &f, 6, 9).unwrap();
        for i in 0..x.len() {
            assert!((d.d1[i] - x[i].cos()).abs() < 1e-6, "{i}");
        }
    }

    #[test]
    fn duplicates_and_degenerate_fits_fail() {
        let mut x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        x[5] = x[4];
        assert!(mwls_derivatives(&x, &vec![0.0; 12], 4, 9).is_err());
        // a tiny cluster far from its neighbours leaves too few distinct
        // effective points in the window
        let x: Vec<f64> = (0..12).map(|i| if i < 9 { i as f64 * 1e-12 } else { 1e6 * i as f64 }).collect();
        assert!(matches!(
            mwls_derivatives(&x, &vec![0.0; 12], 4, 9),
            Err(Error::RankDeficient { .. })
        ));
    }

    proptest! {
        #[test]
        fn polynomial_reproduction(
            gaps in proptest::collection::vec(0.05f64..0.3, 15),
            c in proptest::collection::vec(-2.0f64..2.0, 5),
        ) {
            let mut x = vec![0.0];
            for g in &gaps {
                let last = *x.last().unwrap();
                x.push(last + g);
            }
            let p = |v: f64| c[0] + v * (c[1] + v * (c[2] + v * (c[3] + v * c[4])));
            let dp = |v: f64| c[1] + v * (2.0 * c[2] + v * (3.0 * c[3] + v * 4.0 * c[4]));
            let d2p = |v: f64| 2.0 * c[2] + v * (6.0 * c[3] + v * 12.0 * c[4]);
            let f: Vec<f64> = x.iter().map(|&v| p(v)).collect();
            let d = mwls_derivatives(&x, &f, 4, 9).unwrap();
            for i in 0..x.len() {
                prop_assert!((d.d1[i] - dp(x[i])).abs() < 1e-7 * (1.0 + dp(x[i]).abs()));
                prop_assert!((d.d2[i] - d2p(x[i])).abs() < 1e-6 * (1.0 + d2p(x[i]).abs()));
            }
        }
    }

    fn gaussian(n: usize) -> (InitialState<f64>, PhysicsParams<f64>) {
        let p = PhysicsParams::free_units();
        let labels = UniformGrid::<f64>::linspace(-8.0, 8.0, n).unwrap().points();
        (make_gaussian_state(1.0, &p, labels).unwrap(), p)
    }

    #[test]
    fn zero_time_returns_seed() {
        let (st, p) = gaussian(101);
        let cfg = QtmConfig {
            t_final: 0.0,
            ..Default::default()
        };
        let run = qtm_evolve(&st, &p, &cfg).unwrap();
        assert_eq!(run.snapshots.len(), 1);
        assert_eq!(run.last(), &ParticleSet::seed(&st).unwrap());
    }

    #[test]
    fn free_gaussian_spreads() {
        let (st, p) = gaussian(161);
        let cfg = QtmConfig {
            t_final: 1.0,
            ..Default::default()
        };
        let run = qtm_evolve(&st, &p, &cfg).unwrap().into_result().unwrap();
        let last = run.last();
        let i1 = 90; // a = 1
        assert!((st.labels[i1] - 1.0).abs() < 1e-12);
        assert!((last.positions[i1] - 1.25f64.sqrt()).abs() < 1e-4);
        assert!((last.norm() - 1.0).abs() < 1e-2);
        assert!(last.density_route_gap(4) < 1e-3);
    }
}
