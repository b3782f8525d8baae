//! CSV and JSON emission. Reals are written in shortest round-trip form,
//! rows end in `\n`, and every file opens with a schema line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qflow::model::{EulerianField, TrajectoryState};
use qflow::Complex64;

use crate::error::{CliError, CliResult};

pub const TRAJECTORY_SCHEMA: &str = "# qflow-trajectories v1";
pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "a", "q", "qdot", "chi"];
pub const FIELD_SCHEMA: &str = "# qflow-fields v1";
pub const FIELD_HEADER: [&str; 8] = ["t", "x", "rho", "S", "v", "re_psi", "im_psi", "mask"];
pub const SUMMARY_SCHEMA: &str = "qflow-summary v1";
pub const COMPARE_SCHEMA: &str = "qflow-compare v1";

fn real(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

fn csv_writer(path: &Path, schema: &str, header: &[&str]) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{schema}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> CliResult<()> {
    let mut inner = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_trajectories(path: &Path, snapshots: &[TrajectoryState<f64>]) -> CliResult<()> {
    let mut w = csv_writer(path, TRAJECTORY_SCHEMA, &TRAJECTORY_HEADER)?;
    for s in snapshots {
        let t = real(s.t);
        for i in 0..s.len() {
            let row = [t.clone(), real(s.labels[i]), real(s.q[i]), real(s.qdot[i]), real(s.chi[i])];
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

/// Missing members of a field are written as `nan`.
pub fn write_fields(path: &Path, fields: &[EulerianField<f64>]) -> CliResult<()> {
    let mut w = csv_writer(path, FIELD_SCHEMA, &FIELD_HEADER)?;
    for f in fields {
        let t = real(f.t);
        let col = |v: &Option<Vec<f64>>, i: usize| real(v.as_ref().map_or(f64::NAN, |v| v[i]));
        for i in 0..f.len() {
            let psi = f.psi.as_ref().map_or(Complex64::new(f64::NAN, f64::NAN), |p| p[i]);
            let row = [
                t.clone(),
                real(f.x[i]),
                col(&f.rho, i),
                col(&f.s, i),
                col(&f.v, i),
                real(psi.re),
                real(psi.im),
                if f.support[i] { "1" } else { "0" }.to_string(),
            ];
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

/// Reads a field file and returns its last time level.
pub fn read_last_field(path: &Path) -> CliResult<EulerianField<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    if first.trim_end() != FIELD_SCHEMA {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("expected schema line `{FIELD_SCHEMA}`"),
        });
    }
    let mut rows = csv::ReaderBuilder::new().from_reader(reader);
    let header = rows.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(FIELD_HEADER) {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("expected columns {}", FIELD_HEADER.join(",")),
        });
    }
    let mut field: Option<EulerianField<f64>> = None;
    for row in rows.deserialize::<(f64, f64, f64, f64, f64, f64, f64, u8)>() {
        let (t, x, rho, s, v, re, im, mask) = row.map_err(|e| csv_error(path, e))?;
        let f = match &mut field {
            Some(f) if f.t == t => f,
            _ => {
                let mut f = EulerianField::empty(t, Vec::new());
                f.rho = Some(Vec::new());
                f.s = Some(Vec::new());
                f.v = Some(Vec::new());
                f.psi = Some(Vec::new());
                field.insert(f)
            }
        };
        f.x.push(x);
        f.rho.as_mut().unwrap().push(rho);
        f.s.as_mut().unwrap().push(s);
        f.v.as_mut().unwrap().push(v);
        f.psi.as_mut().unwrap().push(Complex64::new(re, im));
        f.support.push(mask != 0);
    }
    field.ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: "no data rows".into(),
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialise");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, -2.5e-300, 1.0 / 3.0, 2.0, 6.02214076e23] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn fields_round_trip_last_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mk = |t: f64| {
            let mut f = EulerianField::empty(t, vec![-1.0, 0.0, 1.0]);
            f.rho = Some(vec![0.1, 0.2, 1.0 / 3.0]);
            f.s = Some(vec![0.0; 3]);
            f.v = Some(vec![1.0, 2.0, 3.0]);
            f.psi = Some(vec![Complex64::new(0.5, -0.25); 3]);
            f.support = vec![false, true, true];
            f
        };
        write_fields(&path, &[mk(0.0), mk(0.5)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# qflow-fields v1\nt,x,rho,S,v,re_psi,im_psi,mask\n0.0,-1.0,0.1,"));
        assert!(!text.contains('\r'));
        let back = read_last_field(&path).unwrap();
        assert_eq!(back, mk(0.5));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "t,x\n0,1\n").unwrap();
        assert!(read_last_field(&path).is_err());
    }
}
