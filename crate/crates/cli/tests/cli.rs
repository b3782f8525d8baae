use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("QFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SMALL: &str = "grid.n_labels = 101\nsolver.t_final = 0.5\nsolver.snapshot_stride = 50\n";

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn gaussian_accept_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(&["gaussian-accept", "--out", "g"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&dir.path().join("g"));
    assert!(s["report"]["trajectory_max_rel_error"].as_f64().unwrap() <= 1e-3);
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    let fields = std::fs::read_to_string(dir.path().join("g/fields.csv")).unwrap();
    assert!(fields.starts_with("# qflow-fields v1\nt,x,rho,S,v,re_psi,im_psi,mask\n"));
}

#[test]
fn negative_dt_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", "solver.dt = -1\n");
    let o = qflow(&["run-lagrangian", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("solver.dt"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_keys_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.conf", "solver.dtt = 0.1\nphysics.hbar = 1\ngrid.nlabels = 5\n");
    let o = qflow(&["gaussian-accept", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("solver.dtt") && err.contains("grid.nlabels"), "{err}");
}

#[test]
fn tensor_check_passes_all_draws() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(&["tensor-check", "--out", "t"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("100/100 cofactor identities pass"));
    assert_eq!(summary(&dir.path().join("t"))["tensor"]["cofactor_passed"], 100);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    for out in ["a", "b"] {
        for cmd in ["run-lagrangian", "tensor-check"] {
            let sub = format!("{out}/{cmd}");
            let o = qflow(&[cmd, "--config", &cfg, "--seed", "7", "--quiet", "--out", &sub], dir.path());
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            assert!(o.stdout.is_empty());
        }
    }
    for file in [
        "run-lagrangian/trajectories.csv",
        "run-lagrangian/fields.csv",
        "run-lagrangian/summary.json",
        "tensor-check/summary.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between reruns");
    }
    assert_eq!(summary(&dir.path().join("a/tensor-check"))["config"]["run.seed"], "7");
}

#[test]
fn lagrangian_and_reference_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "boost.conf", &format!("{SMALL}initial.wavenumber = 1\n"));
    for cmd in ["run-lagrangian", "run-reference", "run-qtm"] {
        let o = qflow(&[cmd, "--config", &cfg, "--quiet", "--out", cmd], dir.path());
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    for other in ["run-reference", "run-qtm"] {
        let out = format!("vs-{other}");
        let o = qflow(&["compare", "run-lagrangian", other, "--quiet", "--out", &out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(&out).join("compare.json")).unwrap())
                .unwrap();
        assert_eq!(report["t"], 0.5);
        assert!(report["psi"]["l2_phase_reduced"].as_f64().unwrap() < 1e-2, "{report}");
    }
}

#[test]
fn compare_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let coarse = write_config(dir.path(), "coarse.conf", &format!("{SMALL}field.n_points = 101\n"));
    let fine = write_config(dir.path(), "fine.conf", SMALL);
    for (cfg, out) in [(&coarse, "c"), (&fine, "f")] {
        let o = qflow(&["run-reference", "--config", cfg, "--quiet", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = qflow(&["compare", "c", "f"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("different grids"));
}

#[test]
fn blow_up_is_a_numerical_abort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "stiff.conf", "solver.dt = 0.05\nsolver.t_final = 1\n");
    let o = qflow(&["run-lagrangian", "--config", &cfg, "--quiet", "--out", "o"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let s = summary(&dir.path().join("o"));
    assert!(s["abort"].is_string());
    assert_eq!(s["evolution"]["completed"], false);
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(["tensor-check", "--quiet"])
        .current_dir(dir.path())
        .env("QFLOW_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(["tensor-check", "--quiet"])
        .current_dir(dir.path())
        .env("QFLOW_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qflow(&[], dir.path())), 2);
}
