//! Spectral reference solver for the Schrödinger equation on a periodic
//! cell: Strang splitting with the kinetic factor applied in Fourier space.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{madelung_decompose, EulerianField, PhysicsParams, UniformGrid, NORMALIZATION_TOLERANCE};
use crate::scalar::Real;

/// Fraction of the cell on each side treated as the edge zone.
pub const EDGE_FRACTION: f64 = 0.1;

/// Density in the edge zone, relative to the peak, that triggers a
/// wrap-around warning.
pub const WRAP_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitStepConfig<T> {
    pub dt: T,
    pub t_final: T,
    /// Keep every `snapshot_stride`-th step (the final step is always kept).
    pub snapshot_stride: usize,
}

impl<T: Real> SplitStepConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= T::zero()) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidInput("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub t: T,
    pub psi: Vec<Complex<T>>,
}

#[derive(Debug, Clone)]
pub struct ReferenceRun<T> {
    pub grid: UniformGrid<T>,
    pub snapshots: Vec<Snapshot<T>>,
    /// `(t, sum |psi|^2 dx)` at every snapshot.
    pub norm_trace: Vec<(T, T)>,
    /// Step actually used (`t_final` divided into whole steps).
    pub dt: T,
    pub steps: usize,
    pub warnings: Vec<Error>,
}

impl<T: Real> ReferenceRun<T> {
    pub fn last(&self) -> &Snapshot<T> {
        self.snapshots.last().expect("a run keeps at least its initial state")
    }

    /// Largest `|norm - norm_0|` over the run.
    pub fn norm_drift(&self) -> T {
        let n0 = self.norm_trace[0].1;
        self.norm_trace
            .iter()
            .fold(T::zero(), |m, &(_, n)| m.max((n - n0).abs()))
    }
}

/// Angular wavenumbers of the DFT bins for a periodic grid.
pub fn wavenumbers<T: Real>(grid: &UniformGrid<T>) -> Vec<T> {
    let n = grid.len;
    let dk = T::TAU() / (grid.step * T::from_usize_lossy(n));
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            dk * T::lit(m)
        })
        .collect()
}

pub fn norm<T: Real>(psi: &[Complex<T>], grid: &UniformGrid<T>) -> T {
    psi.iter().map(|z| z.norm_sqr()).sum::<T>() * grid.step
}

struct Transforms<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Transforms<T> {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex::new(T::zero(), T::zero()); len],
        }
    }

    /// Multiplies the spectrum of `psi` by `factor` in place.
    fn filter(&mut self, psi: &mut [Complex<T>], factor: &[Complex<T>]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        let scale = T::one() / T::from_usize_lossy(psi.len());
        for (z, f) in psi.iter_mut().zip(factor) {
            *z = *z * *f * scale;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }
}

fn wrap_margin<T: Real>(psi: &[Complex<T>], grid: &UniformGrid<T>) -> Option<T> {
    let n = psi.len();
    let zone = ((T::lit(EDGE_FRACTION) * T::from_usize_lossy(n)).ceil())
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let rho: Vec<T> = psi.iter().map(|z| z.norm_sqr()).collect();
    let peak = rho.iter().fold(T::zero(), |m, &r| m.max(r));
    let limit = peak * T::lit(WRAP_THRESHOLD);
    let first = rho.iter().position(|&r| r > limit)?;
    let last = rho.iter().rposition(|&r| r > limit)?;
    if first < zone || last >= n - zone {
        let margin = (first.min(n - 1 - last)) as f64;
        Some(T::lit(margin) * grid.step)
    } else {
        None
    }
}

/// Strang split-step propagation of `psi0` on the periodic `grid`.
pub fn split_step_evolve<T: Real>(
    psi0: &[Complex<T>],
    grid: &UniformGrid<T>,
    params: &PhysicsParams<T>,
    config: &SplitStepConfig<T>,
) -> Result<ReferenceRun<T>> {
    config.validate()?;
    if psi0.len() != grid.len {
        return Err(Error::GridMismatch(format!(
            "psi has {} samples on a grid of {}",
            psi0.len(),
            grid.len
        )));
    }
    let n0 = norm(psi0, grid);
    if (n0 - T::one()).abs() > T::lit(NORMALIZATION_TOLERANCE) {
        return Err(Error::InvalidInput(format!("initial state has norm {n0}, expected 1")));
    }
    let steps = if config.t_final > T::zero() {
        (config.t_final / config.dt).ceil().to_usize().unwrap_or(1).max(1)
    } else {
        0
    };
    let dt = if steps > 0 {
        config.t_final / T::from_usize_lossy(steps)
    } else {
        config.dt
    };

    let (hbar, mass) = (params.hbar, params.mass);
    let quarter = T::lit(0.25);
    let kinetic: Vec<Complex<T>> = wavenumbers(grid)
        .into_iter()
        .map(|k| Complex::from_polar(T::one(), -hbar * k * k * dt * quarter / mass))
        .collect();
    let potential: Vec<Complex<T>> = params
        .potential_on_grid(grid)?
        .into_iter()
        .map(|v| Complex::from_polar(T::one(), -v * dt / hbar))
        .collect();
    let free = params.is_free();

    let mut fft = Transforms::new(grid.len);
    let mut psi = psi0.to_vec();
    let mut snapshots = vec![Snapshot {
        t: T::zero(),
        psi: psi.clone(),
    }];
    let mut norm_trace = vec![(T::zero(), n0)];
    let mut warnings = Vec::new();
    let mut warned = false;
    let mut check_wrap = |psi: &[Complex<T>], t: T, warnings: &mut Vec<Error>| {
        if !warned {
            if let Some(margin) = wrap_margin(psi, grid) {
                warned = true;
                warnings.push(Error::WrapAroundRisk {
                    t: t.to_f64_lossy(),
                    margin: margin.to_f64_lossy(),
                });
            }
        }
    };
    check_wrap(&psi, T::zero(), &mut warnings);

    for step in 1..=steps {
        fft.filter(&mut psi, &kinetic);
        if !free {
            for (z, p) in psi.iter_mut().zip(&potential) {
                *z *= *p;
            }
        }
        fft.filter(&mut psi, &kinetic);
        let t = if step == steps { config.t_final } else { dt * T::from_usize_lossy(step) };
        if step % config.snapshot_stride == 0 || step == steps {
            check_wrap(&psi, t, &mut warnings);
            norm_trace.push((t, norm(&psi, grid)));
            snapshots.push(Snapshot { t, psi: psi.clone() });
        }
    }
    Ok(ReferenceRun {
        grid: *grid,
        snapshots,
        norm_trace,
        dt,
        steps,
        warnings,
    })
}

/// Spectral derivative of a periodic sample.
pub fn spectral_derivative<T: Real>(psi: &[Complex<T>], grid: &UniformGrid<T>) -> Vec<Complex<T>> {
    let ik: Vec<Complex<T>> = wavenumbers(grid)
        .into_iter()
        .enumerate()
        .map(|(j, k)| {
            // the Nyquist bin has no well-defined sign
            if grid.len % 2 == 0 && j == grid.len / 2 {
                Complex::new(T::zero(), T::zero())
            } else {
                Complex::new(T::zero(), k)
            }
        })
        .collect();
    let mut out = psi.to_vec();
    Transforms::new(grid.len).filter(&mut out, &ik);
    out
}

/// `(rho, S, v)` and `psi` of one snapshot. `S` is pinned at `x_ref`;
/// `v = (hbar/m) Im(psi' / psi)` with the spectral derivative.
pub fn reference_fields<T: Real>(
    snapshot: &Snapshot<T>,
    grid: &UniformGrid<T>,
    x_ref: usize,
    params: &PhysicsParams<T>,
) -> Result<EulerianField<T>> {
    let x = grid.points();
    let dec = madelung_decompose(&snapshot.psi, &x, x_ref, params.hbar)?;
    let dpsi = spectral_derivative(&snapshot.psi, grid);
    let v = snapshot
        .psi
        .iter()
        .zip(&dpsi)
        .zip(&dec.support)
        .map(|((z, dz), &inside)| {
            if inside {
                params.hbar / params.mass * (z.conj() * dz).im / z.norm_sqr()
            } else {
                T::zero()
            }
        })
        .collect();
    let mut field = EulerianField::empty(snapshot.t, x);
    field.rho = Some(dec.rho);
    field.s = Some(dec.s);
    field.v = Some(v);
    field.psi = Some(snapshot.psi.clone());
    field.support = dec.support;
    Ok(field)
}

/// Trigonometric interpolant of a periodic sample at arbitrary points,
/// with its first derivative. The Nyquist bin enters as a cosine.
pub fn spectral_interpolate<T: Real>(
    psi: &[Complex<T>],
    grid: &UniformGrid<T>,
    xq: &[T],
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    if psi.len() != grid.len {
        return Err(Error::GridMismatch(format!(
            "{} samples on a grid of {} points",
            psi.len(),
            grid.len
        )));
    }
    let n = grid.len;
    let mut spec = psi.to_vec();
    let mut fft = Transforms::new(n);
    fft.forward.process_with_scratch(&mut spec, &mut fft.scratch);
    let scale = T::one() / T::from_usize_lossy(n);
    let k = wavenumbers(grid);
    let nyquist = (n % 2 == 0).then_some(n / 2);
    let zero = Complex::new(T::zero(), T::zero());
    let out = xq
        .iter()
        .map(|&x| {
            let dx = x - grid.start;
            let (mut f, mut df) = (zero, zero);
            for (j, (&kj, &c)) in k.iter().zip(&spec).enumerate() {
                let arg = kj * dx;
                if Some(j) == nyquist {
                    f = f + c * arg.cos();
                    df = df - c * (kj * arg.sin());
                } else {
                    let e = Complex::new(arg.cos(), arg.sin());
                    f = f + c * e;
                    df = df + c * e * Complex::new(T::zero(), kj);
                }
            }
            (f * scale, df * scale)
        })
        .unzip();
    Ok(out)
}

/// Like [`reference_fields`] but sampled at arbitrary points `x` (sorted)
/// through the trigonometric interpolant. `S` is pinned at `x[x_ref]`.
pub fn reference_fields_at<T: Real>(
    snapshot: &Snapshot<T>,
    grid: &UniformGrid<T>,
    x: &[T],
    x_ref: usize,
    params: &PhysicsParams<T>,
) -> Result<EulerianField<T>> {
    let (psi, dpsi) = spectral_interpolate(&snapshot.psi, grid, x)?;
    let dec = madelung_decompose(&psi, x, x_ref, params.hbar)?;
    let v = psi
        .iter()
        .zip(&dpsi)
        .zip(&dec.support)
        .map(|((z, dz), &inside)| {
            if inside {
                params.hbar / params.mass * (z.conj() * dz).im / z.norm_sqr()
            } else {
                T::zero()
            }
        })
        .collect();
    let mut field = EulerianField::empty(snapshot.t, x.to_vec());
    field.rho = Some(dec.rho);
    field.s = Some(dec.s);
    field.v = Some(v);
    field.psi = Some(psi);
    field.support = dec.support;
    Ok(field)
}

/// `<psi|H|psi>` with the kinetic part evaluated spectrally.
pub fn reference_energy<T: Real>(
    psi: &[Complex<T>],
    grid: &UniformGrid<T>,
    params: &PhysicsParams<T>,
) -> Result<T> {
    let mut spec = psi.to_vec();
    let mut fft = Transforms::new(grid.len);
    fft.forward.process_with_scratch(&mut spec, &mut fft.scratch);
    let n = T::from_usize_lossy(grid.len);
    let half = T::lit(0.5);
    let kinetic = wavenumbers(grid)
        .into_iter()
        .zip(&spec)
        .map(|(k, z)| half * params.hbar * params.hbar * k * k / params.mass * z.norm_sqr())
        .sum::<T>()
        * grid.step
        / n;
    let potential = params
        .potential_on_grid(grid)?
        .into_iter()
        .zip(psi)
        .map(|(v, z)| v * z.norm_sqr())
        .sum::<T>()
        * grid.step;
    Ok(kinetic + potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::GaussianPacket;
    use crate::model::Potential;

    fn unit() -> PhysicsParams<f64> {
        PhysicsParams::free_units()
    }

    fn packet_on(grid: &UniformGrid<f64>, packet: &GaussianPacket<f64>) -> Vec<Complex<f64>> {
        grid.points().iter().map(|&x| packet.wavefunction(x, 0.0)).collect()
    }

    #[test]
    fn free_gaussian_matches_closed_form() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-16.0, 16.0, 1024).unwrap();
        let packet = GaussianPacket::at_rest(1.0, &p);
        let cfg = SplitStepConfig {
            dt: 1e-3,
            t_final: 2.0,
            snapshot_stride: 500,
        };
        let run = split_step_evolve(&packet_on(&grid, &packet), &grid, &p, &cfg).unwrap();
        assert_eq!(run.steps, 2000);
        let last = run.last();
        assert!((last.t - 2.0).abs() < 1e-12);
        let i0 = grid.nearest_index(0.0);
        assert!((last.psi[i0].norm_sqr() - 0.2820948).abs() < 1e-6);
        let err: f64 = grid
            .points()
            .iter()
            .zip(&last.psi)
            .map(|(&x, z)| (z - packet.wavefunction(x, 2.0)).norm_sqr())
            .sum::<f64>()
            * grid.step;
        assert!(err.sqrt() < 1e-6, "{}", err.sqrt());
        assert!(run.norm_drift() < 1e-10);
        assert!(run.warnings.is_empty());
    }

    #[test]
    fn plane_wave_phase() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(0.0, std::f64::consts::TAU, 64).unwrap();
        let len = std::f64::consts::TAU;
        let psi: Vec<Complex<f64>> = grid
            .points()
            .iter()
            .map(|&x| Complex::from_polar(1.0 / len.sqrt(), x))
            .collect();
        let cfg = SplitStepConfig {
            dt: 0.01,
            t_final: 0.5,
            snapshot_stride: 10,
        };
        let run = split_step_evolve(&psi, &grid, &p, &cfg).unwrap();
        let ratio = run.last().psi[3] / psi[3];
        assert!((ratio.arg() - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn harmonic_run_conserves_norm_and_energy() {
        let p = PhysicsParams::new(1.0, 1.0, Potential::Harmonic { omega: 1.0 }).unwrap();
        let grid = UniformGrid::<f64>::periodic(-12.0, 12.0, 512).unwrap();
        let packet = GaussianPacket::boosted(0.8, 0.5, &p);
        let psi0 = packet_on(&grid, &packet);
        let e0 = reference_energy(&psi0, &grid, &p).unwrap();
        let cfg = SplitStepConfig {
            dt: 1e-3,
            t_final: 2.0,
            snapshot_stride: 100,
        };
        let run = split_step_evolve(&psi0, &grid, &p, &cfg).unwrap();
        assert!(run.norm_drift() < 1e-10);
        let e1 = reference_energy(&run.last().psi, &grid, &p).unwrap();
        // Strang splitting conserves a shadow energy; the drift is O(dt^2)
        assert!((e1 - e0).abs() < 1e-6 * e0.abs(), "{e0} {e1}");
    }

    #[test]
    fn gaussian_energy() {
        // <H> = hbar^2/(8 m sigma0^2) + hbar^2 k^2 / 2m
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-16.0, 16.0, 512).unwrap();
        let e = reference_energy(&packet_on(&grid, &GaussianPacket::boosted(1.0, 1.0, &p)), &grid, &p).unwrap();
        assert!((e - 0.625).abs() < 1e-10);
    }

    #[test]
    fn wrap_around_is_flagged() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-6.0, 6.0, 256).unwrap();
        let packet = GaussianPacket::at_rest(1.0, &p);
        let cfg = SplitStepConfig {
            dt: 1e-2,
            t_final: 1.0,
            snapshot_stride: 10,
        };
        let run = split_step_evolve(&packet_on(&grid, &packet), &grid, &p, &cfg).unwrap();
        assert!(matches!(run.warnings[0], Error::WrapAroundRisk { .. }));
    }

    #[test]
    fn rejects_bad_input() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-8.0, 8.0, 64).unwrap();
        let psi = vec![Complex::new(1.0, 0.0); 64];
        let cfg = SplitStepConfig {
            dt: 1e-2,
            t_final: 1.0,
            snapshot_stride: 1,
        };
        assert!(split_step_evolve(&psi, &grid, &p, &cfg).is_err());
        let good = packet_on(&grid, &GaussianPacket::at_rest(1.0, &p));
        let bad = SplitStepConfig { dt: -1.0, ..cfg };
        assert!(split_step_evolve(&good, &grid, &p, &bad).is_err());
    }

    #[test]
    fn fields_of_gaussians() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-16.0, 16.0, 1024).unwrap();
        let i0 = grid.nearest_index(0.0);
        let i1 = grid.nearest_index(1.0);
        assert!((grid.x(i1) - 1.0).abs() < 1e-12);

        let packet = GaussianPacket::at_rest(1.0, &p);
        let cfg = SplitStepConfig {
            dt: 1e-3,
            t_final: 2.0,
            snapshot_stride: 2000,
        };
        let run = split_step_evolve(&packet_on(&grid, &packet), &grid, &p, &cfg).unwrap();
        let f = reference_fields(run.last(), &grid, i0, &p).unwrap();
        let s = f.s.as_ref().unwrap();
        assert!((s[i1] - s[i0] - 0.125).abs() < 1e-4);
        // the pinned value is the closed form itself: no arctan wrap
        assert!((s[i0] + std::f64::consts::PI / 8.0).abs() < 1e-8);
        assert!((f.v.as_ref().unwrap()[i1] - 0.25).abs() < 1e-8);

        let f0 = reference_fields(&run.snapshots[0], &grid, i0, &p).unwrap();
        let v0 = f0.v.unwrap();
        assert!(v0.iter().zip(&f0.x).filter(|(_, x)| x.abs() < 6.0).all(|(v, _)| v.abs() < 1e-10));

        let boosted = GaussianPacket::boosted(1.0, 1.0, &p);
        let snap = Snapshot {
            t: 0.0,
            psi: packet_on(&grid, &boosted),
        };
        let fb = reference_fields(&snap, &grid, i0, &p).unwrap();
        let vb = fb.v.unwrap();
        assert!(vb.iter().zip(&fb.x).filter(|(_, x)| x.abs() < 6.0).all(|(v, _)| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn trigonometric_interpolant_matches_packet_off_grid() {
        let p = unit();
        let grid = UniformGrid::<f64>::periodic(-16.0, 16.0, 256).unwrap();
        let packet = GaussianPacket::boosted(1.0, 1.5, &p);
        let xq = [-3.01, -0.37, 0.0, 0.4142, 2.5];
        let (f, df) = spectral_interpolate(&packet_on(&grid, &packet), &grid, &xq).unwrap();
        let h = 1e-5;
        for (k, &x) in xq.iter().enumerate() {
            assert!((f[k] - packet.wavefunction(x, 0.0)).norm() < 1e-10);
            let fd = (packet.wavefunction(x + h, 0.0) - packet.wavefunction(x - h, 0.0)) / (2.0 * h);
            assert!((df[k] - fd).norm() < 1e-7);
        }
    }
}
