//! Flat `key = value` configuration with namespaced keys.
//!
//! Every key has a default; a file only lists what it changes. Anything
//! after `#` on a line is a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qflow::benchmarks::GaussianPacket;
use qflow::lagrangian::{AccelerationPath, Integrator, SolverConfig, TimeStep};
use qflow::model::{make_boosted_gaussian_state, InitialState, PhysicsParams, Potential, TabulatedPotential, UniformGrid};
use qflow::qtm::QtmConfig;
use qflow::reference::SplitStepConfig;
use qflow::validation::GaussianAcceptConfig;

use crate::error::{CliError, CliResult};

/// Recognised keys and their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", "2024"),
    ("physics.hbar", "1"),
    ("physics.mass", "1"),
    // free | harmonic | tabulated
    ("physics.potential", "free"),
    ("physics.omega", "1"),
    // two columns `x,V` on a uniform grid; relative to the config file
    ("physics.potential_file", ""),
    ("initial.sigma0", "1"),
    ("initial.wavenumber", "0"),
    ("grid.n_labels", "401"),
    ("grid.label_min", "-8"),
    ("grid.label_max", "8"),
    ("solver.dt", "auto"),
    ("solver.cfl", "0.1"),
    // rk4 | velocity_verlet
    ("solver.integrator", "rk4"),
    ("solver.stencil_order", "4"),
    ("solver.t_final", "2"),
    ("solver.snapshot_stride", "100"),
    // conservative | direct | newton | both_with_check
    ("solver.acceleration_path", "conservative"),
    ("solver.energy_drift_limit", "0.1"),
    ("field.x_min", "-8"),
    ("field.x_max", "8"),
    ("field.n_points", "641"),
    ("field.compare_half_width", "6"),
    ("reference.x_min", "-20"),
    ("reference.x_max", "20"),
    ("reference.n_points", "1024"),
    ("reference.dt", "0.001"),
    ("reference.snapshot_stride", "100"),
    ("qtm.n_particles", "161"),
    ("qtm.dt", "auto"),
    ("qtm.cfl", "0.1"),
    ("qtm.degree", "4"),
    ("qtm.stencil", "9"),
    ("qtm.weight_width", "3"),
    ("qtm.snapshot_stride", "100"),
    ("tensor.draws", "100"),
];

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg = Self {
            base_dir: base_dir.to_path_buf(),
            ..Self::default()
        };
        let mut seen = BTreeMap::new();
        let mut unknown = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !cfg.values.contains_key(key) {
                unknown.push(key.to_string());
                continue;
            }
            if let Some(first) = seen.insert(key.to_string(), n + 1) {
                return Err(CliError::Config(format!(
                    "line {}: `{key}` already set on line {first}",
                    n + 1
                )));
            }
            cfg.values.insert(key.to_string(), value.to_string());
        }
        if !unknown.is_empty() {
            return Err(CliError::UnknownKeys(unknown));
        }
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.values.insert("run.seed".into(), seed.to_string());
    }

    /// The effective configuration, defaults included.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key is registered")
    }

    fn bad(key: &str, value: &str, expected: &str) -> CliError {
        CliError::Config(format!("{key} = `{value}`: expected {expected}"))
    }

    fn real(&self, key: &str) -> CliResult<f64> {
        let v = self.raw(key);
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Self::bad(key, v, "a finite number")),
        }
    }

    fn positive(&self, key: &str) -> CliResult<f64> {
        let x = self.real(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(Self::bad(key, self.raw(key), "a positive number"))
        }
    }

    fn count(&self, key: &str) -> CliResult<usize> {
        let v = self.raw(key);
        v.parse().map_err(|_| Self::bad(key, v, "a non-negative integer"))
    }

    fn step(&self, key: &str) -> CliResult<TimeStep<f64>> {
        if self.raw(key) == "auto" {
            Ok(TimeStep::Auto)
        } else {
            let v = self.raw(key);
            match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(TimeStep::Fixed(x)),
                _ => Err(Self::bad(key, v, "`auto` or a positive number")),
            }
        }
    }

    fn choice<'a>(&self, key: &str, options: &[&'a str]) -> CliResult<&'a str> {
        let v = self.raw(key);
        options
            .iter()
            .find(|&&o| o == v)
            .copied()
            .ok_or_else(|| Self::bad(key, v, &format!("one of {}", options.join(", "))))
    }
}

/// Typed view of a [`Config`], checked once up front.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub params: PhysicsParams<f64>,
    pub sigma0: f64,
    pub wavenumber: f64,
    pub labels: Vec<f64>,
    pub solver: SolverConfig<f64>,
    pub field_x: Vec<f64>,
    pub compare_half_width: f64,
    pub reference_grid: UniformGrid<f64>,
    pub reference: SplitStepConfig<f64>,
    pub qtm: QtmConfig<f64>,
    pub qtm_labels: Vec<f64>,
    pub tensor_draws: usize,
}

fn span(cfg: &Config, lo: &str, hi: &str) -> CliResult<(f64, f64)> {
    let (a, b) = (cfg.real(lo)?, cfg.real(hi)?);
    if a < b {
        Ok((a, b))
    } else {
        Err(CliError::Config(format!("{lo} = {a} must be below {hi} = {b}")))
    }
}

impl Settings {
    pub fn from_config(cfg: &Config) -> CliResult<Self> {
        let seed = cfg.raw("run.seed");
        let seed = seed
            .parse()
            .map_err(|_| Config::bad("run.seed", seed, "a non-negative integer"))?;

        let hbar = cfg.positive("physics.hbar")?;
        let mass = cfg.positive("physics.mass")?;
        let potential = match cfg.choice("physics.potential", &["free", "harmonic", "tabulated"])? {
            "free" => Potential::Free,
            "harmonic" => Potential::Harmonic {
                omega: cfg.positive("physics.omega")?,
            },
            _ => Potential::Tabulated(read_potential(cfg)?),
        };
        let params = PhysicsParams::new(hbar, mass, potential)?;

        let (lo, hi) = span(cfg, "grid.label_min", "grid.label_max")?;
        let labels = UniformGrid::linspace(lo, hi, cfg.count("grid.n_labels")?)?.points();

        let solver = SolverConfig {
            dt: cfg.step("solver.dt")?,
            cfl_coefficient: cfg.positive("solver.cfl")?,
            integrator: match cfg.choice("solver.integrator", &["rk4", "velocity_verlet"])? {
                "rk4" => Integrator::Rk4,
                _ => Integrator::VelocityVerlet,
            },
            stencil_order: cfg.count("solver.stencil_order")?,
            t_final: cfg.positive("solver.t_final")?,
            snapshot_stride: cfg.count("solver.snapshot_stride")?,
            acceleration_path: match cfg.choice(
                "solver.acceleration_path",
                &["conservative", "direct", "newton", "both_with_check"],
            )? {
                "conservative" => AccelerationPath::Conservative,
                "direct" => AccelerationPath::Direct,
                "newton" => AccelerationPath::Newton,
                _ => AccelerationPath::BothWithCheck,
            },
            energy_drift_limit: cfg.positive("solver.energy_drift_limit")?,
        };
        solver.validate()?;

        let (xlo, xhi) = span(cfg, "field.x_min", "field.x_max")?;
        let field_x = UniformGrid::linspace(xlo, xhi, cfg.count("field.n_points")?)?.points();
        let compare_half_width = cfg.positive("field.compare_half_width")?;

        let (rlo, rhi) = span(cfg, "reference.x_min", "reference.x_max")?;
        let reference_grid = UniformGrid::periodic(rlo, rhi, cfg.count("reference.n_points")?)?;
        if xlo < rlo || xhi >= rhi {
            return Err(CliError::Config(format!(
                "field grid [{xlo}, {xhi}] must lie inside the reference cell [{rlo}, {rhi})"
            )));
        }
        let reference = SplitStepConfig {
            dt: cfg.positive("reference.dt")?,
            t_final: solver.t_final,
            snapshot_stride: cfg.count("reference.snapshot_stride")?,
        };
        reference.validate()?;

        let qtm = QtmConfig {
            dt: cfg.step("qtm.dt")?,
            cfl_coefficient: cfg.positive("qtm.cfl")?,
            t_final: solver.t_final,
            degree: cfg.count("qtm.degree")?,
            stencil: cfg.count("qtm.stencil")?,
            weight_width: cfg.positive("qtm.weight_width")?,
            snapshot_stride: cfg.count("qtm.snapshot_stride")?,
        };
        qtm.validate()?;
        let qtm_labels = UniformGrid::linspace(lo, hi, cfg.count("qtm.n_particles")?)?.points();

        let tensor_draws = cfg.count("tensor.draws")?;
        if tensor_draws == 0 {
            return Err(Config::bad("tensor.draws", "0", "at least one draw"));
        }

        Ok(Self {
            seed,
            params,
            sigma0: cfg.positive("initial.sigma0")?,
            wavenumber: cfg.real("initial.wavenumber")?,
            labels,
            solver,
            field_x,
            compare_half_width,
            reference_grid,
            reference,
            qtm,
            qtm_labels,
            tensor_draws,
        })
    }

    pub fn initial_state(&self, labels: &[f64]) -> CliResult<InitialState<f64>> {
        Ok(make_boosted_gaussian_state(
            self.sigma0,
            self.wavenumber,
            &self.params,
            labels.to_vec(),
        )?)
    }

    pub fn packet(&self) -> GaussianPacket<f64> {
        GaussianPacket::boosted(self.sigma0, self.wavenumber, &self.params)
    }

    /// The acceptance pipeline needs a free packet at rest on symmetric grids.
    pub fn gaussian_accept(&self) -> CliResult<GaussianAcceptConfig> {
        let refuse = |why: &str| Err(CliError::Config(format!("gaussian-accept: {why}")));
        if !self.params.is_free() {
            return refuse("physics.potential must be free");
        }
        if self.wavenumber != 0.0 {
            return refuse("initial.wavenumber must be 0");
        }
        let (a0, a1) = (self.labels[0], self.labels[self.labels.len() - 1]);
        let (x0, x1) = (self.field_x[0], self.field_x[self.field_x.len() - 1]);
        if a0 != -a1 || x0 != -x1 {
            return refuse("label and field grids must be symmetric about 0");
        }
        let cfg = GaussianAcceptConfig {
            hbar: self.params.hbar,
            mass: self.params.mass,
            sigma0: self.sigma0,
            n_labels: self.labels.len(),
            label_half_width: a1,
            t_final: self.solver.t_final,
            dt: self.solver.dt,
            cfl_coefficient: self.solver.cfl_coefficient,
            integrator: self.solver.integrator,
            stencil_order: self.solver.stencil_order,
            acceleration_path: self.solver.acceleration_path,
            snapshot_stride: self.solver.snapshot_stride,
            field_half_width: x1,
            field_points: self.field_x.len(),
            compare_half_width: self.compare_half_width,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_potential(cfg: &Config) -> CliResult<TabulatedPotential<f64>> {
    let name = cfg.raw("physics.potential_file");
    if name.is_empty() {
        return Err(CliError::Config(
            "physics.potential = tabulated needs physics.potential_file".into(),
        ));
    }
    let path = cfg.base_dir.join(name);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| CliError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
    let (mut x, mut v) = (Vec::new(), Vec::new());
    for record in reader.deserialize::<(f64, f64)>() {
        let (xi, vi) = record.map_err(|e| CliError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        x.push(xi);
        v.push(vi);
    }
    if x.len() < 2 {
        return Err(CliError::Format {
            path,
            message: "a tabulated potential needs at least two rows".into(),
        });
    }
    let grid = UniformGrid::linspace(x[0], x[x.len() - 1], x.len())?;
    let tol = 1e-9 * grid.step.abs();
    if let Some(i) = x.iter().enumerate().position(|(i, &xi)| (xi - grid.x(i)).abs() > tol) {
        return Err(CliError::Format {
            path,
            message: format!("abscissa is not uniform at row {}", i + 1),
        });
    }
    Ok(TabulatedPotential::new(grid, v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Config> {
        Config::parse(text, Path::new("."))
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = parse("# header\nsolver.dt = 0.002  # fixed\n\nphysics.hbar=2\n").unwrap();
        assert_eq!(cfg.echo()["solver.dt"], "0.002");
        assert_eq!(cfg.echo()["physics.hbar"], "2");
        assert_eq!(cfg.echo()["grid.n_labels"], "401");
        let s = Settings::from_config(&cfg).unwrap();
        assert_eq!(s.solver.dt, TimeStep::Fixed(0.002));
        assert_eq!(s.params.hbar, 2.0);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        match parse("solver.dtt = 1\nphysics.hbar = 1\ngrid.bogus = 3\n") {
            Err(CliError::UnknownKeys(keys)) => assert_eq!(keys, ["solver.dtt", "grid.bogus"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "solver.dt = -1",
            "solver.dt = fast",
            "physics.mass = 0",
            "solver.integrator = euler",
            "grid.label_min = 9",
            "field.x_max = 30",
            "solver.stencil_order = 3",
            "tensor.draws = 0",
        ] {
            let cfg = parse(text).unwrap();
            let err = Settings::from_config(&cfg).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
        assert!(parse("solver.dt").is_err());
        assert!(parse("solver.dt = 1\nsolver.dt = 2").is_err());
    }

    #[test]
    fn defaults_make_a_valid_acceptance_run() {
        let s = Settings::from_config(&Config::default()).unwrap();
        assert_eq!(s.gaussian_accept().unwrap(), GaussianAcceptConfig::default());
        let boosted = parse("initial.wavenumber = 1").unwrap();
        assert!(Settings::from_config(&boosted).unwrap().gaussian_accept().is_err());
    }

    #[test]
    fn tabulated_potential_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..41)
            .map(|i| {
                let x = -20.0 + i as f64;
                format!("{x},{}\n", 0.5 * x * x)
            })
            .collect();
        std::fs::write(dir.path().join("v.csv"), format!("# x,V\n{rows}")).unwrap();
        let cfg = Config::parse(
            "physics.potential = tabulated\nphysics.potential_file = v.csv\n",
            dir.path(),
        )
        .unwrap();
        let s = Settings::from_config(&cfg).unwrap();
        assert!((s.params.potential_at(1.5).unwrap() - 1.125).abs() < 0.05);
        let missing = parse("physics.potential = tabulated").unwrap();
        assert!(Settings::from_config(&missing).is_err());
    }
}
