//! One function per subcommand. Each writes its files under `out` and
//! returns the summary document it wrote.

use std::path::Path;

use serde_json::{json, Value};

use qflow::benchmarks::{error_norms_complex, error_norms_real, ErrorNorms, GaussianPacket};
use qflow::interp::CubicHermite;
use qflow::lagrangian::{evolve, Evolution};
use qflow::model::{EulerianField, InitialState, TrajectoryState};
use qflow::qtm::{qtm_evolve, MwlsOperator, ParticleSet};
use qflow::reconstruction::{ensemble_moments, reconstruct_wavefunction, MomentReport};
use qflow::reference::{reference_energy, reference_fields_at, split_step_evolve};
use qflow::scalar::trapezoid;
use qflow::validation::{gaussian_acceptance, tensor_identity_suite};
use qflow::Complex64;

use crate::config::{Config, Settings};
use crate::error::{CliError, CliResult};
use crate::output::{
    read_last_field, write_fields, write_json, write_trajectories, COMPARE_SCHEMA, SUMMARY_SCHEMA,
};

pub struct Context<'a> {
    pub config: &'a Config,
    pub settings: &'a Settings,
    pub out: &'a Path,
    pub quiet: bool,
}

impl Context<'_> {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn summary(&self, command: &str) -> Value {
        json!({
            "schema": SUMMARY_SCHEMA,
            "command": command,
            "config": self.config.echo(),
        })
    }

    fn save(&self, summary: &Value) -> CliResult<()> {
        write_json(&self.out.join("summary.json"), summary)
    }
}

fn norms_json(n: &ErrorNorms<f64>) -> Value {
    json!({
        "l2": n.l2,
        "linf": n.linf,
        "l2_phase_reduced": n.l2_phase_reduced,
        "phase": n.phase,
    })
}

fn moments_json(m: &MomentReport<f64>) -> Value {
    let one = |m: Option<qflow::reconstruction::Moments<f64>>| {
        m.map(|m| json!({"position": m.position, "momentum": m.momentum}))
    };
    json!({
        "lagrangian": one(m.lagrangian),
        "eulerian": one(m.eulerian),
        "gap": m.gap(),
    })
}

fn rho_norm(field: &EulerianField<f64>) -> Option<f64> {
    field.rho.as_ref().map(|r| trapezoid(&field.x, r))
}

/// Closed-form scores; only meaningful without an external potential.
fn exact_scores(ctx: &Context, packet: &GaussianPacket<f64>, field: &EulerianField<f64>) -> CliResult<Value> {
    let exact = packet.field(&field.x, field.t);
    let window: Vec<bool> = field
        .x
        .iter()
        .zip(&field.support)
        .map(|(&x, &s)| s && (x - packet.trajectory(0.0, field.t).0).abs() <= ctx.settings.compare_half_width)
        .collect();
    let psi = error_norms_complex(
        field.psi.as_ref().expect("field carries psi"),
        exact.psi.as_ref().expect("closed form carries psi"),
        &field.x,
        &window,
    )?;
    Ok(json!({ "t": field.t, "psi": norms_json(&psi) }))
}

fn trajectory_error(packet: &GaussianPacket<f64>, snapshots: &[TrajectoryState<f64>]) -> f64 {
    snapshots
        .iter()
        .flat_map(|s| {
            s.labels
                .iter()
                .zip(&s.q)
                .map(move |(&a, &q)| (q - packet.trajectory(a, s.t).0).abs() / (1.0 + a.abs()))
        })
        .fold(0.0, f64::max)
}

fn evolution_json(e: &Evolution<f64>) -> Value {
    json!({
        "dt": e.dt,
        "steps": e.steps_taken,
        "completed": e.completed(),
        "t_reached": e.last().t,
        "energy": e.energy,
        "energy_drift": e.energy_drift(),
        "min_jacobian": e.min_jacobian,
        "path_disagreement": e.path_disagreement,
    })
}

pub fn run_lagrangian(ctx: &Context) -> CliResult<Value> {
    let s = ctx.settings;
    let init = s.initial_state(&s.labels)?;
    let evolution = evolve(&init, &s.params, &s.solver)?;
    write_trajectories(&ctx.out.join("trajectories.csv"), &evolution.snapshots)?;
    let mut summary = ctx.summary("run-lagrangian");
    summary["evolution"] = evolution_json(&evolution);
    ctx.say(format!(
        "evolved {} labels: {} steps of dt = {:.3e}, energy drift {:.3e}, min J {:.4}",
        init.len(),
        evolution.steps_taken,
        evolution.dt,
        evolution.energy_drift(),
        evolution.min_jacobian
    ));
    if let Some(abort) = evolution.abort {
        summary["abort"] = json!(abort.to_string());
        ctx.save(&summary)?;
        return Err(abort.into());
    }

    let rec = reconstruct_wavefunction(&evolution.snapshots, &init, &s.params, &s.field_x)?;
    write_fields(&ctx.out.join("fields.csv"), std::slice::from_ref(&rec.field))?;
    let moments = ensemble_moments(Some(evolution.last()), &init, Some(&rec.field), &s.params)?;
    summary["reconstruction"] = json!({
        "t": rec.field.t,
        "rho_norm": rho_norm(&rec.field),
        "global_phase": rec.global_phase,
        "min_jacobian": rec.min_jacobian,
        "phase_check": rec.phase_check.as_ref().map(|c| json!({
            "max_deviation": c.max_deviation,
            "offset": c.offset,
            "tolerance": c.tolerance,
            "consistent": c.consistent(),
        })),
        "warnings": rec.warnings.iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    summary["moments"] = moments_json(&moments);
    if s.params.is_free() {
        let packet = s.packet();
        let mut exact = exact_scores(ctx, &packet, &rec.field)?;
        exact["trajectory_max_rel_error"] = json!(trajectory_error(&packet, &evolution.snapshots));
        summary["exact"] = exact;
    }
    for w in &rec.warnings {
        ctx.say(format!("warning: {w}"));
    }
    ctx.save(&summary)?;
    Ok(summary)
}

pub fn run_reference(ctx: &Context) -> CliResult<Value> {
    let s = ctx.settings;
    let grid = &s.reference_grid;
    let packet = s.packet();
    let psi0: Vec<Complex64> = grid.points().iter().map(|&x| packet.wavefunction(x, 0.0)).collect();
    let run = split_step_evolve(&psi0, grid, &s.params, &s.reference)?;
    let last = run.last();
    let peak = (0..grid.len)
        .max_by(|&i, &j| last.psi[i].norm_sqr().total_cmp(&last.psi[j].norm_sqr()))
        .expect("grid is not empty");
    let x_ref = nearest(&s.field_x, grid.x(peak));
    let field = reference_fields_at(last, grid, &s.field_x, x_ref, &s.params)?;
    write_fields(&ctx.out.join("fields.csv"), std::slice::from_ref(&field))?;

    let e0 = reference_energy(&run.snapshots[0].psi, grid, &s.params)?;
    let e1 = reference_energy(&last.psi, grid, &s.params)?;
    let init = s.initial_state(&s.labels)?;
    let moments = ensemble_moments(None, &init, Some(&field), &s.params)?;
    let mut summary = ctx.summary("run-reference");
    summary["reference"] = json!({
        "dt": run.dt,
        "steps": run.steps,
        "t_reached": last.t,
        "norm": run.norm_trace,
        "norm_drift": run.norm_drift(),
        "energy_initial": e0,
        "energy_final": e1,
        "warnings": run.warnings.iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    summary["field"] = json!({ "t": field.t, "rho_norm": rho_norm(&field) });
    summary["moments"] = moments_json(&moments);
    if s.params.is_free() {
        summary["exact"] = exact_scores(ctx, &packet, &field)?;
    }
    ctx.say(format!(
        "split-step: {} steps of dt = {:.3e}, norm drift {:.3e}",
        run.steps,
        run.dt,
        run.norm_drift()
    ));
    for w in &run.warnings {
        ctx.say(format!("warning: {w}"));
    }
    ctx.save(&summary)?;
    Ok(summary)
}

fn nearest(x: &[f64], target: f64) -> usize {
    (0..x.len())
        .min_by(|&i, &j| (x[i] - target).abs().total_cmp(&(x[j] - target).abs()))
        .expect("grid is not empty")
}

/// Particles as trajectories: `qdot = S'/m` from the fit, `chi = S - S0`.
fn particle_state(
    p: &ParticleSet<f64>,
    init: &InitialState<f64>,
    fit: &MwlsOperator<f64>,
    mass: f64,
) -> TrajectoryState<f64> {
    TrajectoryState {
        t: p.t,
        labels: init.labels.clone(),
        q: p.positions.clone(),
        qdot: fit.apply(&p.phase).d1.iter().map(|g| g / mass).collect(),
        chi: p.phase.iter().zip(&init.s0).map(|(s, s0)| s - s0).collect(),
    }
}

/// Hermite resampling of a particle set onto `x`, with fitted slopes.
fn particle_field(p: &ParticleSet<f64>, fit: &MwlsOperator<f64>, x: &[f64], s: &Settings) -> CliResult<EulerianField<f64>> {
    let dc = fit.apply(&p.log_density).d1;
    let ds = fit.apply(&p.phase).d1;
    let c = CubicHermite::with_slopes(p.positions.clone(), p.log_density.clone(), dc)?;
    let phase = CubicHermite::with_slopes(p.positions.clone(), p.phase.clone(), ds)?;
    let mut f = EulerianField::empty(p.t, x.to_vec());
    let (mut rho, mut sv, mut v, mut psi) = (vec![], vec![], vec![], vec![]);
    f.support.clear();
    for &xi in x {
        match (c.eval(xi), phase.eval(xi), phase.derivative(xi)) {
            (Some(ci), Some(si), Some(gi)) => {
                rho.push(ci.exp());
                sv.push(si);
                v.push(gi / s.params.mass);
                psi.push(Complex64::from_polar((0.5 * ci).exp(), si / s.params.hbar));
                f.support.push(true);
            }
            _ => {
                rho.push(0.0);
                sv.push(0.0);
                v.push(0.0);
                psi.push(Complex64::new(0.0, 0.0));
                f.support.push(false);
            }
        }
    }
    f.rho = Some(rho);
    f.s = Some(sv);
    f.v = Some(v);
    f.psi = Some(psi);
    Ok(f)
}

pub fn run_qtm(ctx: &Context) -> CliResult<Value> {
    let s = ctx.settings;
    let init = s.initial_state(&s.qtm_labels)?;
    let run = qtm_evolve(&init, &s.params, &s.qtm)?;
    let mut paths = Vec::with_capacity(run.snapshots.len());
    for p in &run.snapshots {
        let fit = MwlsOperator::new(&p.positions, s.qtm.degree, s.qtm.stencil, s.qtm.weight_width)?;
        paths.push(particle_state(p, &init, &fit, s.params.mass));
    }
    write_trajectories(&ctx.out.join("trajectories.csv"), &paths)?;
    let mut summary = ctx.summary("run-qtm");
    summary["qtm"] = json!({
        "particles": init.len(),
        "dt": run.dt,
        "steps": run.steps_taken,
        "completed": run.completed(),
        "t_reached": run.last().t,
        "norm": run.snapshots.iter().map(|p| (p.t, p.norm())).collect::<Vec<_>>(),
        "density_route_gap": run.last().density_route_gap(s.qtm.stencil / 2),
    });
    ctx.say(format!(
        "{} particles: {} steps of dt = {:.3e}",
        init.len(),
        run.steps_taken,
        run.dt
    ));
    if let Some(abort) = run.abort {
        summary["abort"] = json!(abort.to_string());
        ctx.save(&summary)?;
        return Err(abort.into());
    }
    let last = run.last();
    let fit = MwlsOperator::new(&last.positions, s.qtm.degree, s.qtm.stencil, s.qtm.weight_width)?;
    let field = particle_field(last, &fit, &s.field_x, s)?;
    write_fields(&ctx.out.join("fields.csv"), std::slice::from_ref(&field))?;
    let moments = ensemble_moments(paths.last(), &init, Some(&field), &s.params)?;
    summary["field"] = json!({ "t": field.t, "rho_norm": rho_norm(&field) });
    summary["moments"] = moments_json(&moments);
    if s.params.is_free() {
        let packet = s.packet();
        let mut exact = exact_scores(ctx, &packet, &field)?;
        exact["trajectory_max_rel_error"] = json!(trajectory_error(&packet, &paths));
        summary["exact"] = exact;
    }
    ctx.save(&summary)?;
    Ok(summary)
}

fn field_file(path: &Path) -> std::path::PathBuf {
    if path.is_dir() {
        path.join("fields.csv")
    } else {
        path.to_path_buf()
    }
}

/// Error norms between the last field levels of two result sets, taken
/// where both are supported.
pub fn compare(ctx: &Context, a: &Path, b: &Path) -> CliResult<Value> {
    let (pa, pb) = (field_file(a), field_file(b));
    let (fa, fb) = (read_last_field(&pa)?, read_last_field(&pb)?);
    if fa.len() != fb.len()
        || fa
            .x
            .iter()
            .zip(&fb.x)
            .any(|(u, w)| (u - w).abs() > 1e-12 * u.abs().max(1.0))
    {
        return Err(CliError::Config(format!(
            "{} and {} are sampled on different grids",
            pa.display(),
            pb.display()
        )));
    }
    if (fa.t - fb.t).abs() > 1e-9 * fa.t.abs().max(1.0) {
        return Err(CliError::Config(format!(
            "fields are at different times ({} and {})",
            fa.t, fb.t
        )));
    }
    let mask: Vec<bool> = fa.support.iter().zip(&fb.support).map(|(&u, &w)| u && w).collect();
    let real = |u: &Option<Vec<f64>>, w: &Option<Vec<f64>>| {
        error_norms_real(u.as_ref().unwrap(), w.as_ref().unwrap(), &fa.x, &mask)
    };
    let rho = real(&fa.rho, &fb.rho)?;
    let v = real(&fa.v, &fb.v)?;
    let psi = error_norms_complex(fa.psi.as_ref().unwrap(), fb.psi.as_ref().unwrap(), &fa.x, &mask)?;
    let report = json!({
        "schema": COMPARE_SCHEMA,
        "a": pa.display().to_string(),
        "b": pb.display().to_string(),
        "t": fa.t,
        "points": fa.len(),
        "compared_points": mask.iter().filter(|&&m| m).count(),
        "rho": norms_json(&rho),
        "v": norms_json(&v),
        "psi": norms_json(&psi),
    });
    write_json(&ctx.out.join("compare.json"), &report)?;
    ctx.say(format!(
        "t = {}: rho L2 {:.3e}, v L2 {:.3e}, psi L2 {:.3e} (phase-reduced {:.3e})",
        fa.t,
        rho.l2,
        v.l2,
        psi.l2,
        psi.l2_phase_reduced.unwrap_or(f64::NAN)
    ));
    Ok(report)
}

pub fn tensor_check(ctx: &Context) -> CliResult<Value> {
    let s = ctx.settings;
    let r = tensor_identity_suite(s.seed, s.tensor_draws)?;
    let mut summary = ctx.summary("tensor-check");
    summary["tensor"] = json!({
        "seed": r.seed,
        "draws": r.draws,
        "cofactor_passed": r.cofactor_passed,
        "cofactor_worst": r.cofactor_worst,
        "hyper_cofactor_worst": r.hyper_cofactor_worst,
        "divergence": r.divergence,
        "divergence_orders": r.divergence_orders(),
        "force": r.force,
        "force_orders": r.force_orders(),
        "stress_disagreement": r.stress_disagreement,
        "stress_symmetry": r.stress_symmetry,
        "checks": {
            "cofactor": r.cofactor_ok(),
            "hyper_cofactor": r.hyper_cofactor_ok(),
            "divergence": r.divergence_ok(),
            "stress": r.stress_ok(),
            "force": r.force_ok(),
        },
        "passed": r.passed(),
    });
    ctx.save(&summary)?;
    let orders = |o: Vec<f64>| o.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ");
    ctx.say(format!(
        "{}/{} cofactor identities pass (worst {:.1e})",
        r.cofactor_passed, r.draws, r.cofactor_worst
    ));
    ctx.say(format!("hyper-cofactor worst {:.1e}", r.hyper_cofactor_worst));
    ctx.say(format!("cofactor divergence orders [{}]", orders(r.divergence_orders())));
    ctx.say(format!(
        "stress forms differ by {:.1e}, asymmetry {:.1e}",
        r.stress_disagreement, r.stress_symmetry
    ));
    ctx.say(format!("force identity orders [{}]", orders(r.force_orders())));
    let failed = [r.cofactor_ok(), r.hyper_cofactor_ok(), r.divergence_ok(), r.stress_ok(), r.force_ok()]
        .iter()
        .filter(|&&ok| !ok)
        .count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(summary)
}

pub fn gaussian_accept(ctx: &Context) -> CliResult<Value> {
    let cfg = ctx.settings.gaussian_accept()?;
    let acc = gaussian_acceptance(&cfg)?;
    let r = &acc.report;
    write_trajectories(&ctx.out.join("trajectories.csv"), &acc.evolution.snapshots)?;
    write_fields(&ctx.out.join("fields.csv"), std::slice::from_ref(&acc.reconstruction.field))?;
    let checks = r.checks();
    let mut summary = ctx.summary("gaussian-accept");
    summary["evolution"] = evolution_json(&acc.evolution);
    summary["report"] = json!({
        "trajectory_max_rel_error": r.trajectory_max_rel_error,
        "trajectory_error_time": r.trajectory_error_time,
        "psi_l2_phase_reduced": r.psi_l2_phase_reduced,
        "rho_norm": r.rho_norm,
        "phase_check_deviation": r.phase_check_deviation,
        "path_disagreement_initial": r.path_disagreement_initial,
        "path_disagreement_final": r.path_disagreement_final,
        "qhj_interior_max": r.qhj_interior_max,
        "continuity_max": r.continuity_max,
        "euler_max": r.euler_max,
    });
    summary["checks"] = checks
        .iter()
        .map(|c| json!({"name": c.name, "value": c.value, "limit": c.limit, "passed": c.passed()}))
        .collect();
    ctx.save(&summary)?;
    for c in &checks {
        ctx.say(format!(
            "{:<26} {:.3e} <= {:.0e}  {}",
            c.name,
            c.value,
            c.limit,
            if c.passed() { "PASS" } else { "FAIL" }
        ));
    }
    ctx.say(format!("evolution took {:.2} s", r.runtime_seconds));
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(summary)
}
