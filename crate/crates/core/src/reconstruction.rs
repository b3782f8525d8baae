//! From trajectories back to fields.
//!
//! Every push-forward is a cubic Hermite interpolant in `x` through the
//! trajectory points, with nodal slopes known from the label data:
//! `da/dx = 1/J`, `d ln rho/dx = (L' - K/J)/J`, `dv/dx = qdot'/J` and
//! `dS/dx = m v`. Points of the grid outside `[q_0, q_{N-1}]` are masked,
//! never extrapolated.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::interp::CubicHermite;
use crate::kinematics::{quantum_potential_log_form, MaskedField};
use crate::lagrangian::LabelDynamics;
use crate::model::{assemble_wavefunction, EulerianField, InitialState, PhysicsParams, TrajectoryState};
use crate::scalar::{trapezoid_weights, Real};
use crate::stencil::DerivativeOperator;

/// Stencil accuracy for label and grid derivatives in this module.
const ACCURACY: usize = 4;

/// Allowed spread between the trajectory phase and the quadrature phase.
pub const PHASE_TOLERANCE: f64 = 1e-3;

fn check_map<T: Real>(traj: &TrajectoryState<T>) -> Result<()> {
    let n = traj.len();
    if traj.labels.len() != n || traj.qdot.len() != n || traj.chi.len() != n {
        return Err(Error::InvalidInput("trajectory arrays differ in length".into()));
    }
    if n < ACCURACY + 2 {
        return Err(Error::InvalidInput(format!("{n} trajectories are too few to reconstruct from")));
    }
    if let Some(i) = traj.q.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::TrajectoryCrossing {
            index: i,
            t: traj.t.to_f64_lossy(),
            jacobian: ((traj.q[i + 1] - traj.q[i]) / (traj.labels[i + 1] - traj.labels[i])).to_f64_lossy(),
        });
    }
    Ok(())
}

fn label_d1<T: Real>(labels: &[T], f: &[T]) -> Result<Vec<T>> {
    Ok(DerivativeOperator::new(labels, 1, ACCURACY)?.apply(f))
}

/// `J = dq/da` on the labels.
fn jacobian_on_labels<T: Real>(traj: &TrajectoryState<T>) -> Result<Vec<T>> {
    let j = label_d1(&traj.labels, &traj.q)?;
    if let Some(i) = j.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::TrajectoryCrossing {
            index: i,
            t: traj.t.to_f64_lossy(),
            jacobian: j[i].to_f64_lossy(),
        });
    }
    Ok(j)
}

fn sample<T: Real>(interp: &CubicHermite<T>, x: &[T]) -> (Vec<T>, Vec<bool>) {
    x.iter()
        .map(|&xi| match interp.eval(xi) {
            Some(v) => (v, true),
            None => (T::zero(), false),
        })
        .unzip()
}

fn check_against<T: Real>(traj: &TrajectoryState<T>, init: &InitialState<T>) -> Result<()> {
    if init.labels != traj.labels {
        return Err(Error::GridMismatch(
            "trajectory labels differ from the initial-state labels".into(),
        ));
    }
    Ok(())
}

/// Label of the trajectory through each `x` (the inverse of `q(., t)`),
/// with the points outside the trajectory image masked.
pub fn invert_map<T: Real>(traj: &TrajectoryState<T>, x: &[T]) -> Result<MaskedField<T>> {
    check_map(traj)?;
    let j = jacobian_on_labels(traj)?;
    let slopes = j.iter().map(|&v| v.recip()).collect();
    let inv = CubicHermite::monotone_with_slopes(traj.q.clone(), traj.labels.clone(), slopes)?;
    let (values, valid) = sample(&inv, x);
    Ok(MaskedField { values, valid })
}

/// Eulerian `ln rho` interpolant through the trajectory points.
fn log_density_interpolant<T: Real>(
    traj: &TrajectoryState<T>,
    init: &InitialState<T>,
) -> Result<CubicHermite<T>> {
    check_map(traj)?;
    check_against(traj, init)?;
    if let Some(i) = init.rho0.iter().position(|&r| !(r > T::zero())) {
        return Err(Error::InvalidInput(format!("label {i} carries no density")));
    }
    let j = jacobian_on_labels(traj)?;
    let k = DerivativeOperator::new(&traj.labels, 2, ACCURACY)?.apply(&traj.q);
    let l1 = init.label_derivatives(ACCURACY)?.log_rho_d1;
    let values = (0..j.len()).map(|i| init.rho0[i].ln() - j[i].ln()).collect();
    let slopes = (0..j.len()).map(|i| (l1[i] - k[i] / j[i]) / j[i]).collect();
    CubicHermite::with_slopes(traj.q.clone(), values, slopes)
}

fn velocity_interpolant<T: Real>(traj: &TrajectoryState<T>) -> Result<CubicHermite<T>> {
    check_map(traj)?;
    let j = jacobian_on_labels(traj)?;
    let dv = label_d1(&traj.labels, &traj.qdot)?;
    let slopes = dv.iter().zip(&j).map(|(&d, &jj)| d / jj).collect();
    CubicHermite::with_slopes(traj.q.clone(), traj.qdot.clone(), slopes)
}

/// Density pushed forward from `rho0`: `rho(x) = rho0(a) / J(a)`, `a = a(x)`.
pub fn eulerian_density<T: Real>(
    traj: &TrajectoryState<T>,
    init: &InitialState<T>,
    x: &[T],
) -> Result<EulerianField<T>> {
    let log_rho = log_density_interpolant(traj, init)?;
    let (lr, support) = sample(&log_rho, x);
    let rho = lr
        .iter()
        .zip(&support)
        .map(|(&l, &s)| if s { l.exp() } else { T::zero() })
        .collect();
    let mut field = EulerianField::empty(traj.t, x.to_vec());
    field.rho = Some(rho);
    field.support = support;
    Ok(field)
}

/// Velocity pushed forward: `v(x) = qdot(a(x))`.
pub fn eulerian_velocity<T: Real>(traj: &TrajectoryState<T>, x: &[T]) -> Result<EulerianField<T>> {
    let (v, support) = sample(&velocity_interpolant(traj)?, x);
    let mut field = EulerianField::empty(traj.t, x.to_vec());
    field.v = Some(v);
    field.support = support;
    Ok(field)
}

/// Agreement between the phase carried along trajectories and the phase
/// rebuilt from `integral m v dx` plus the time function at the centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCheck<T> {
    /// `max |S_path - S_quad - c|` with the best constant `c`.
    pub max_deviation: T,
    pub offset: T,
    pub tolerance: T,
}

impl<T: Real> PhaseCheck<T> {
    pub fn consistent(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    /// `rho`, `S`, `v` and `psi` on the grid.
    pub field: EulerianField<T>,
    /// `S` at the grid point nearest the centre of the grid.
    pub global_phase: T,
    pub center_index: usize,
    /// `None` when the centre leaves the trajectory image during the history.
    pub phase_check: Option<PhaseCheck<T>>,
    pub min_jacobian: T,
    /// Non-fatal findings, e.g. [`Error::PhaseInconsistency`].
    pub warnings: Vec<Error>,
}

/// Hermite interpolant of a label quantity through the trajectory points,
/// with slopes from label stencils.
fn label_field_interpolant<T: Real>(traj: &TrajectoryState<T>, j: &[T], f: Vec<T>) -> Result<CubicHermite<T>> {
    let df = label_d1(&traj.labels, &f)?;
    let slopes = df.iter().zip(j).map(|(&d, &jj)| d / jj).collect();
    CubicHermite::with_slopes(traj.q.clone(), f, slopes)
}

/// `-(m v^2/2 + V + V_Q)` at `x` for one snapshot; `None` off the image.
fn phase_rate_at<T: Real>(
    traj: &TrajectoryState<T>,
    dynamics: &LabelDynamics<T>,
    params: &PhysicsParams<T>,
    x: T,
) -> Result<Option<T>> {
    let j = jacobian_on_labels(traj)?;
    let vq = dynamics.quantum_potential(&traj.q, traj.t)?;
    let vq = label_field_interpolant(traj, &j, vq)?;
    let v = velocity_interpolant(traj)?;
    match (v.eval(x), vq.eval(x)) {
        (Some(v), Some(vq)) => {
            let half = T::lit(0.5);
            Ok(Some(-(half * params.mass * v * v + params.potential_at(x)? + vq)))
        }
        _ => Ok(None),
    }
}

/// Wavefunction at the last snapshot of `history`.
///
/// `S(x) = S0(a) + chi(a)` at `a = a(x)`. The alternative route, spatial
/// quadrature of `m v` from the grid centre plus the time integral of
/// `-(m v^2/2 + V + V_Q)` at the centre, is evaluated alongside and
/// reported in [`Reconstruction::phase_check`].
pub fn reconstruct_wavefunction<T: Real>(
    history: &[TrajectoryState<T>],
    init: &InitialState<T>,
    params: &PhysicsParams<T>,
    x: &[T],
) -> Result<Reconstruction<T>> {
    let traj = history
        .last()
        .ok_or_else(|| Error::MissingSnapshot("empty trajectory history".into()))?;
    if history.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::InvalidInput("history must be ordered in time".into()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("reconstruction grid needs two points".into()));
    }
    let mut field = eulerian_density(traj, init, x)?;
    let support = field.support.clone();
    let vfield = eulerian_velocity(traj, x)?;
    let v = vfield.v.expect("velocity field populated");

    let j = jacobian_on_labels(traj)?;
    let min_jacobian = j.iter().copied().fold(T::infinity(), T::min);
    let phase: Vec<T> = (0..traj.len()).map(|i| init.s0[i] + traj.chi[i]).collect();
    let slopes = traj.qdot.iter().map(|&u| params.mass * u).collect();
    let s_interp = CubicHermite::with_slopes(traj.q.clone(), phase, slopes)?;
    let (s, _) = sample(&s_interp, x);

    let rho = field.rho.as_ref().expect("density populated");
    let mut psi = assemble_wavefunction(rho, &s, params.hbar)?;
    for (p, &inside) in psi.iter_mut().zip(&support) {
        if !inside {
            *p = Complex::new(T::zero(), T::zero());
        }
    }

    let mid = (x[0] + x[x.len() - 1]) * T::lit(0.5);
    let center = (0..x.len())
        .min_by(|&a, &b| {
            (x[a] - mid)
                .abs()
                .partial_cmp(&(x[b] - mid).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let global_phase = if support[center] { s[center] } else { T::nan() };

    let phase_check = if support[center] {
        dual_path_check(history, init, params, x, center, &s, &v, &support)?
    } else {
        None
    };
    let mut warnings = Vec::new();
    if let Some(pc) = phase_check {
        if !pc.consistent() {
            warnings.push(Error::PhaseInconsistency {
                max_deviation: pc.max_deviation.to_f64_lossy(),
                tolerance: pc.tolerance.to_f64_lossy(),
            });
        }
    }

    field.s = Some(s);
    field.v = Some(v);
    field.psi = Some(psi);
    Ok(Reconstruction {
        field,
        global_phase,
        center_index: center,
        phase_check,
        min_jacobian,
        warnings,
    })
}

#[allow(clippy::too_many_arguments)]
fn dual_path_check<T: Real>(
    history: &[TrajectoryState<T>],
    init: &InitialState<T>,
    params: &PhysicsParams<T>,
    x: &[T],
    center: usize,
    s: &[T],
    v: &[T],
    support: &[bool],
) -> Result<Option<PhaseCheck<T>>> {
    let xc = x[center];
    let first = &history[0];
    check_map(first)?;
    let s0_interp = {
        let phase: Vec<T> = (0..first.len()).map(|i| init.s0[i] + first.chi[i]).collect();
        let slopes = first.qdot.iter().map(|&u| params.mass * u).collect();
        CubicHermite::with_slopes(first.q.clone(), phase, slopes)?
    };
    let Some(mut s_center) = s0_interp.eval(xc) else {
        return Ok(None);
    };
    let dynamics = LabelDynamics::new(init, params, ACCURACY)?;
    let mut rates = Vec::with_capacity(history.len());
    for snap in history {
        match phase_rate_at(snap, &dynamics, params, xc)? {
            Some(r) => rates.push(r),
            None => return Ok(None),
        }
    }
    let half = T::lit(0.5);
    for k in 1..history.len() {
        s_center += half * (history[k].t - history[k - 1].t) * (rates[k] + rates[k - 1]);
    }

    // cumulative trapezoid of m v outward from the centre
    let n = x.len();
    let mut quad = vec![T::zero(); n];
    quad[center] = s_center;
    let m = params.mass;
    for i in center + 1..n {
        if !support[i] {
            break;
        }
        quad[i] = quad[i - 1] + half * m * (v[i] + v[i - 1]) * (x[i] - x[i - 1]);
    }
    for i in (0..center).rev() {
        if !support[i] {
            break;
        }
        quad[i] = quad[i + 1] - half * m * (v[i] + v[i + 1]) * (x[i + 1] - x[i]);
    }
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for i in 0..n {
        if support[i] {
            let d = s[i] - quad[i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok(Some(PhaseCheck {
        max_deviation: (hi - lo) * half,
        offset: (hi + lo) * half,
        tolerance: T::lit(PHASE_TOLERANCE),
    }))
}

/// Support points at least `margin` points inside the contiguous support.
fn interior<T: Real>(fields: &[&EulerianField<T>], margin: usize) -> Vec<bool> {
    let n = fields[0].len();
    let ok: Vec<bool> = (0..n).map(|i| fields.iter().all(|f| f.support[i])).collect();
    (0..n)
        .map(|i| {
            i >= margin && i + margin < n && (i - margin..=i + margin).all(|k| ok[k])
        })
        .collect()
}

fn check_pair<T: Real>(a: &EulerianField<T>, b: &EulerianField<T>) -> Result<T> {
    if a.x.len() != b.x.len() || a.x.iter().zip(&b.x).any(|(p, q)| p != q) {
        return Err(Error::GridMismatch("snapshots sampled on different grids".into()));
    }
    if a.support.len() != a.len() || b.support.len() != b.len() {
        return Err(Error::GridMismatch("support mask length differs from grid".into()));
    }
    let dt = b.t - a.t;
    if !(dt > T::zero()) {
        return Err(Error::MissingSnapshot(
            "two snapshots at increasing times are needed".into(),
        ));
    }
    Ok(dt)
}

fn require<'a, T>(v: &'a Option<Vec<T>>, what: &str) -> Result<&'a [T]> {
    v.as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("field lacks {what}")))
}

/// Quantum potential on a field grid from `ln rho`; zero off the support.
fn field_quantum_potential<T: Real>(f: &EulerianField<T>, params: &PhysicsParams<T>) -> Result<Vec<T>> {
    let rho = require(&f.rho, "rho")?;
    let lr: Vec<T> = rho
        .iter()
        .zip(&f.support)
        .map(|(&r, &s)| if s && r > T::zero() { r.ln() } else { T::zero() })
        .collect();
    let d1 = DerivativeOperator::new(&f.x, 1, ACCURACY)?;
    let d2 = DerivativeOperator::new(&f.x, 2, ACCURACY)?;
    let (g1, g2) = (d1.apply(&lr), d2.apply(&lr));
    Ok((0..rho.len())
        .map(|i| quantum_potential_log_form(g1[i], g2[i], params.hbar, params.mass))
        .collect())
}

/// `dS/dt + (dS/dx)^2/2m + V + V_Q` from two snapshots, centred at their
/// mean time. Valid only away from the support edges.
pub fn qhj_residual<T: Real>(
    fields: &[EulerianField<T>],
    params: &PhysicsParams<T>,
) -> Result<MaskedField<T>> {
    let [a, b] = match fields {
        [a, b] => [a, b],
        [_] | [] => {
            return Err(Error::MissingSnapshot(
                "the quantum Hamilton-Jacobi residual needs two snapshots".into(),
            ))
        }
        _ => return Err(Error::InvalidInput("pass exactly two consecutive snapshots".into())),
    };
    let dt = check_pair(a, b)?;
    let (sa, sb) = (require(&a.s, "S")?, require(&b.s, "S")?);
    let d1 = DerivativeOperator::new(&a.x, 1, ACCURACY)?;
    let (ga, gb) = (d1.apply(sa), d1.apply(sb));
    let (qa, qb) = (field_quantum_potential(a, params)?, field_quantum_potential(b, params)?);
    let valid = interior(&[a, b], ACCURACY + 1);
    let half = T::lit(0.5);
    let inv2m = half / params.mass;
    let values = (0..a.len())
        .map(|i| {
            if !valid[i] {
                return Ok(T::zero());
            }
            let v = params.potential_at(a.x[i])?;
            let ka = inv2m * ga[i] * ga[i] + qa[i];
            let kb = inv2m * gb[i] * gb[i] + qb[i];
            Ok((sb[i] - sa[i]) / dt + half * (ka + kb) + v)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(MaskedField { values, valid })
}

/// Continuity and Euler residuals from two snapshots, centred at their
/// mean time: `rho_t + (rho v)_x` and `v_t + v v_x + (V + V_Q)_x / m`.
pub fn continuity_euler_residuals<T: Real>(
    a: &EulerianField<T>,
    b: &EulerianField<T>,
    params: &PhysicsParams<T>,
) -> Result<(MaskedField<T>, MaskedField<T>)> {
    let dt = check_pair(a, b)?;
    let (ra, rb) = (require(&a.rho, "rho")?, require(&b.rho, "rho")?);
    let (va, vb) = (require(&a.v, "v")?, require(&b.v, "v")?);
    let d1 = DerivativeOperator::new(&a.x, 1, ACCURACY)?;
    let flux = |r: &[T], v: &[T]| d1.apply(&r.iter().zip(v).map(|(&p, &q)| p * q).collect::<Vec<T>>());
    let (fa, fb) = (flux(ra, va), flux(rb, vb));
    let potential = |f: &EulerianField<T>| -> Result<Vec<T>> {
        let vq = field_quantum_potential(f, params)?;
        let total = f
            .x
            .iter()
            .zip(&vq)
            .map(|(&x, &q)| Ok(params.potential_at(x)? + q))
            .collect::<Result<Vec<T>>>()?;
        Ok(d1.apply(&total))
    };
    let (pa, pb) = (potential(a)?, potential(b)?);
    let (dva, dvb) = (d1.apply(va), d1.apply(vb));
    let valid = interior(&[a, b], 2 * ACCURACY + 1);
    let half = T::lit(0.5);
    let n = a.len();
    let mut cont = vec![T::zero(); n];
    let mut euler = vec![T::zero(); n];
    for i in 0..n {
        if valid[i] {
            cont[i] = (rb[i] - ra[i]) / dt + half * (fa[i] + fb[i]);
            let adv = half * (va[i] * dva[i] + vb[i] * dvb[i]);
            euler[i] = (vb[i] - va[i]) / dt + adv + half * (pa[i] + pb[i]) / params.mass;
        }
    }
    Ok((
        MaskedField {
            values: cont,
            valid: valid.clone(),
        },
        MaskedField { values: euler, valid },
    ))
}

fn velocity_on_grid<T: Real>(f: &EulerianField<T>) -> Result<CubicHermite<T>> {
    let v = require(&f.v, "v")?;
    let slopes = DerivativeOperator::new(&f.x, 1, ACCURACY)?.apply(v);
    CubicHermite::with_slopes(f.x.clone(), v.to_vec(), slopes)
}

/// Integrates `dx/dt = v(x, t)` through the reference velocity snapshots
/// from each `x0` up to `traj.t` and returns the largest distance to
/// `q(a = x0, traj.t)`. Velocities are linear in time between snapshots.
pub fn advect_labels_check<T: Real>(
    reference: &[EulerianField<T>],
    traj: &TrajectoryState<T>,
    x0: &[T],
) -> Result<T> {
    let (Some(first), Some(last)) = (reference.first(), reference.last()) else {
        return Err(Error::MissingSnapshot("no reference snapshots".into()));
    };
    let eps = T::lit(1e-9) * (T::one() + traj.t.abs());
    if traj.t < first.t - eps || traj.t > last.t + eps {
        return Err(Error::InvalidInput(format!(
            "reference covers t in [{}, {}] but the trajectories are at t = {}",
            first.t, last.t, traj.t
        )));
    }
    check_map(traj)?;
    let interps = reference
        .iter()
        .map(velocity_on_grid)
        .collect::<Result<Vec<_>>>()?;
    let velocity = |x: T, t: T| -> Result<T> {
        let k = reference
            .partition_point(|f| f.t <= t)
            .saturating_sub(1)
            .min(reference.len().saturating_sub(2));
        let off = || Error::InvalidInput(format!("advected point {x} left the reference grid"));
        let v0 = interps[k].eval(x).ok_or_else(off)?;
        if reference.len() == 1 {
            return Ok(v0);
        }
        let v1 = interps[k + 1].eval(x).ok_or_else(off)?;
        let (t0, t1) = (reference[k].t, reference[k + 1].t);
        let w = (t - t0) / (t1 - t0);
        Ok(v0 + (v1 - v0) * w)
    };
    let j = jacobian_on_labels(traj)?;
    let q_of_a = CubicHermite::with_slopes(traj.labels.clone(), traj.q.clone(), j)?;

    let mut times: Vec<T> = reference.iter().map(|f| f.t).filter(|&t| t < traj.t).collect();
    times.push(traj.t);
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let mut worst = T::zero();
    for &start in x0 {
        let mut x = start;
        for w in times.windows(2) {
            let (t, h) = (w[0], w[1] - w[0]);
            let k1 = velocity(x, t)?;
            let k2 = velocity(x + half * h * k1, t + half * h)?;
            let k3 = velocity(x + half * h * k2, t + half * h)?;
            let k4 = velocity(x + h * k3, t + h)?;
            x += h * sixth * (k1 + T::lit(2.0) * (k2 + k3) + k4);
        }
        let target = q_of_a
            .eval(start)
            .ok_or_else(|| Error::InvalidInput(format!("x0 = {start} is not a label in range")))?;
        worst = worst.max((x - target).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub position: T,
    pub momentum: T,
}

/// `<x> = sum w q rho0`, `<p> = sum w m qdot rho0` over the labels.
pub fn lagrangian_moments<T: Real>(
    traj: &TrajectoryState<T>,
    init: &InitialState<T>,
    params: &PhysicsParams<T>,
) -> Result<Moments<T>> {
    check_against(traj, init)?;
    let w = trapezoid_weights(&init.labels);
    let mut m = Moments {
        position: T::zero(),
        momentum: T::zero(),
    };
    for i in 0..w.len() {
        m.position += w[i] * init.rho0[i] * traj.q[i];
        m.momentum += w[i] * init.rho0[i] * params.mass * traj.qdot[i];
    }
    Ok(m)
}

/// `<x> = int x rho`, `<p> = int rho dS/dx` over the support. Falls back
/// to `m v` when the field has no phase.
pub fn eulerian_moments<T: Real>(field: &EulerianField<T>, params: &PhysicsParams<T>) -> Result<Moments<T>> {
    let rho = require(&field.rho, "rho")?;
    let lo = field.support.iter().position(|&s| s).ok_or(Error::EmptyMask)?;
    let hi = field.support.iter().rposition(|&s| s).unwrap_or(lo) + 1;
    if field.support[lo..hi].iter().any(|&s| !s) {
        return Err(Error::InvalidInput("support is not contiguous".into()));
    }
    let x = &field.x[lo..hi];
    let r = &rho[lo..hi];
    let w = trapezoid_weights(x);
    let grad: Vec<T> = match (&field.s, &field.v) {
        (Some(s), _) => DerivativeOperator::new(x, 1, ACCURACY)?.apply(&s[lo..hi]),
        (None, Some(v)) => v[lo..hi].iter().map(|&u| params.mass * u).collect(),
        _ => return Err(Error::InvalidInput("field has neither S nor v".into())),
    };
    let mut m = Moments {
        position: T::zero(),
        momentum: T::zero(),
    };
    for i in 0..x.len() {
        m.position += w[i] * x[i] * r[i];
        m.momentum += w[i] * r[i] * grad[i];
    }
    Ok(m)
}

/// Moments from either picture or both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport<T> {
    pub lagrangian: Option<Moments<T>>,
    pub eulerian: Option<Moments<T>>,
}

impl<T: Real> MomentReport<T> {
    /// Largest difference between the two pictures, if both are present.
    pub fn gap(&self) -> Option<T> {
        let (l, e) = (self.lagrangian?, self.eulerian?);
        Some((l.position - e.position).abs().max((l.momentum - e.momentum).abs()))
    }
}

pub fn ensemble_moments<T: Real>(
    traj: Option<&TrajectoryState<T>>,
    init: &InitialState<T>,
    field: Option<&EulerianField<T>>,
    params: &PhysicsParams<T>,
) -> Result<MomentReport<T>> {
    Ok(MomentReport {
        lagrangian: traj.map(|t| lagrangian_moments(t, init, params)).transpose()?,
        eulerian: field.map(|f| eulerian_moments(f, params)).transpose()?,
    })
}
