//! Run configuration: TOML schema, built-in scenarios, flag overrides and
//! the canonical config hash stamped into every output file.
//!
//! Parsing is strict: unknown keys anywhere in the file are rejected, since
//! a silently ignored typo is the usual way a numerics run goes wrong.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cdme::{RateField, DEFAULT_GRID_LEN, DEFAULT_TRUNCATION};

use crate::CliError;

/// File-facing schema; every field optional so scenario presets and
/// defaults can fill the gaps.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub solver: Option<String>,
    pub n_trunc: Option<usize>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub lambda_c: Option<FieldSpec>,
    pub lambda_d: Option<FieldSpec>,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub fd: FdSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: String,
    pub value: Option<f64>,
    pub location: Option<f64>,
    pub mass: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_max: Option<f64>,
    pub snapshots: Option<usize>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub steps: Option<usize>,
    pub mollify_width: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub trajectories: Option<usize>,
    pub dt: Option<f64>,
    pub bins: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub g_identity_tol: Option<f64>,
    pub gamma_identity_tol: Option<f64>,
    pub pde_residual_tol: Option<f64>,
    pub cdme_residual_tol: Option<f64>,
    pub equivalence_tol: Option<f64>,
    pub fd_agreement_tol: Option<f64>,
    pub with_simulation: Option<bool>,
    pub with_fd_check: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub rho2_slices: Option<Vec<f64>>,
    pub surface_time: Option<f64>,
    /// Every `stride`-th grid node goes into the surface and rho_1 tables.
    pub surface_stride: Option<usize>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub n_trunc: Option<usize>,
    pub grid: Option<usize>,
}

/// Fully resolved configuration; serialized canonically for the hash.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub scenario: String,
    pub solver: String,
    pub n_trunc: usize,
    pub grid: usize,
    pub seed: u64,
    /// Not hashed: where files land cannot change their contents.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    /// Not hashed: results are thread-count independent by construction.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub lambda_c: FieldSpec,
    pub lambda_d: FieldSpec,
    pub t_max: f64,
    pub snapshots: usize,
    pub fd_steps: usize,
    pub mollify_width: f64,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub sim_trajectories: usize,
    pub sim_dt: f64,
    pub sim_bins: usize,
    pub sim_snapshot_times: Vec<f64>,
    pub g_identity_tol: f64,
    pub gamma_identity_tol: f64,
    pub pde_residual_tol: f64,
    pub cdme_residual_tol: f64,
    pub equivalence_tol: f64,
    pub fd_agreement_tol: f64,
    pub with_simulation: bool,
    pub with_fd_check: bool,
    pub rho2_slices: Vec<f64>,
    pub surface_time: f64,
    pub surface_stride: usize,
}

fn constant_spec(value: f64) -> FieldSpec {
    FieldSpec {
        kind: "constant".into(),
        value: Some(value),
        location: None,
        mass: None,
        path: None,
    }
}

fn dirac_spec(location: f64, mass: f64) -> FieldSpec {
    FieldSpec {
        kind: "dirac".into(),
        value: None,
        location: Some(location),
        mass: Some(mass),
        path: None,
    }
}

/// Built-in scenarios (rates 0.5, one
/// thousand series terms).
pub fn scenario_fields(name: &str) -> Result<(FieldSpec, FieldSpec), CliError> {
    let lambda_d = constant_spec(0.5);
    let lambda_c = match name {
        "constant" => constant_spec(0.5),
        "dirac0" => dirac_spec(0.0, 0.5),
        "dirac-half" => dirac_spec(0.5, 0.5),
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario '{other}' (expected constant, dirac0 or dirac-half)"
            )))
        }
    };
    Ok((lambda_c, lambda_d))
}

impl Config {
    pub fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<Self, CliError> {
        let scenario = overrides
            .scenario
            .clone()
            .or(raw.scenario.clone())
            .unwrap_or_else(|| "constant".to_string());

        let (default_c, default_d) = scenario_fields(&scenario)?;
        let lambda_c = raw.lambda_c.clone().unwrap_or(default_c);
        let lambda_d = raw.lambda_d.clone().unwrap_or(default_d);

        let cfg = Config {
            scenario,
            solver: raw.solver.clone().unwrap_or_else(|| "spectral".into()),
            n_trunc: overrides
                .n_trunc
                .or(raw.n_trunc)
                .unwrap_or(DEFAULT_TRUNCATION),
            grid: overrides.grid.or(raw.grid).unwrap_or(DEFAULT_GRID_LEN),
            seed: overrides.seed.or(raw.seed).unwrap_or(42),
            out_dir: overrides
                .out_dir
                .clone()
                .or(raw.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            threads: overrides.threads.or(raw.threads).unwrap_or(0),
            lambda_c,
            lambda_d,
            t_max: raw.time.t_max.unwrap_or(4.0),
            snapshots: raw.time.snapshots.unwrap_or(cdme::DEFAULT_SNAPSHOTS),
            fd_steps: raw.fd.steps.unwrap_or(cdme::DEFAULT_FD_STEPS),
            mollify_width: raw.fd.mollify_width.unwrap_or(cdme::DEFAULT_MOLLIFY_WIDTH),
            mc_paths: raw.mc.paths.unwrap_or(100_000),
            mc_dt: raw.mc.dt.unwrap_or(1e-3),
            sim_trajectories: raw.sim.trajectories.unwrap_or(cdme::DEFAULT_TRAJECTORIES),
            sim_dt: raw.sim.dt.unwrap_or(cdme::DEFAULT_SIM_DT),
            sim_bins: raw.sim.bins.unwrap_or(cdme::DEFAULT_BINS),
            sim_snapshot_times: raw
                .sim
                .snapshot_times
                .unwrap_or_else(|| cdme::DEFAULT_SNAPSHOT_TIMES.to_vec()),
            g_identity_tol: raw.validate.g_identity_tol.unwrap_or(1e-12),
            gamma_identity_tol: raw.validate.gamma_identity_tol.unwrap_or(1e-8),
            pde_residual_tol: raw.validate.pde_residual_tol.unwrap_or(1e-4),
            cdme_residual_tol: raw.validate.cdme_residual_tol.unwrap_or(1e-4),
            equivalence_tol: raw.validate.equivalence_tol.unwrap_or(1e-8),
            fd_agreement_tol: raw.validate.fd_agreement_tol.unwrap_or(1e-5),
            with_simulation: raw.validate.with_simulation.unwrap_or(false),
            with_fd_check: raw.validate.with_fd_check.unwrap_or(true),
            rho2_slices: raw
                .output
                .rho2_slices
                .unwrap_or_else(|| vec![0.0, 0.25, 0.5]),
            surface_time: raw.output.surface_time.unwrap_or(0.25),
            surface_stride: raw.output.surface_stride.unwrap_or(10),
        };
        cfg.validate_ranges()?;
        Ok(cfg)
    }

    fn validate_ranges(&self) -> Result<(), CliError> {
        if self.solver != "spectral" && self.solver != "crank-nicolson" {
            return Err(CliError::Config(format!(
                "unknown solver '{}' (available: spectral, crank-nicolson)",
                self.solver
            )));
        }
        if self.n_trunc == 0 || self.grid < 2 {
            return Err(CliError::Config(
                "n_trunc must be >= 1 and grid >= 2".into(),
            ));
        }
        if !self.t_max.is_finite() || self.t_max <= 0.0 {
            return Err(CliError::Config("t_max must be positive".into()));
        }
        if self.snapshots < 4 {
            return Err(CliError::Config("need at least 4 snapshots".into()));
        }
        if self.surface_stride == 0 {
            return Err(CliError::Config("surface_stride must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.surface_time) && self.surface_time > self.t_max {
            return Err(CliError::Config(
                "surface_time must lie within the horizon".into(),
            ));
        }
        Ok(())
    }

    /// Build the rate field named by a spec; tabulated fields load a
    /// two-column `x,value` CSV (with header) whose x column must be the
    /// uniform grid matching the configured resolution.
    pub fn build_field(&self, spec: &FieldSpec, which: &str) -> Result<RateField, CliError> {
        let field = match spec.kind.as_str() {
            "constant" => {
                let value = spec.value.ok_or_else(|| {
                    CliError::Config(format!("{which}: constant field needs 'value'"))
                })?;
                RateField::constant(value)
            }
            "dirac" => {
                let location = spec.location.ok_or_else(|| {
                    CliError::Config(format!("{which}: dirac field needs 'location'"))
                })?;
                let mass = spec.mass.ok_or_else(|| {
                    CliError::Config(format!("{which}: dirac field needs 'mass'"))
                })?;
                RateField::dirac(location, mass)
            }
            "tabulated" => {
                let path = spec.path.as_ref().ok_or_else(|| {
                    CliError::Config(format!("{which}: tabulated field needs 'path'"))
                })?;
                let samples = load_tabulated_csv(path, self.grid)?;
                RateField::tabulated(samples)
            }
            other => {
                return Err(CliError::Config(format!(
                    "{which}: unknown field kind '{other}' (constant, dirac or tabulated)"
                )))
            }
        };
        field.map_err(|e| CliError::Config(format!("{which}: {e}")))
    }

    /// FNV-1a hash of the canonical serialization; stamped into outputs so
    /// any file can be traced back to the exact run setup.
    pub fn hash(&self) -> u64 {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canonical.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn header_comment(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config_hash=0x{:016x}", self.hash());
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# scenario={}", self.scenario);
        s
    }
}

pub fn load_raw(path: Option<&Path>) -> Result<RawConfig, CliError> {
    match path {
        None => Ok(RawConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))
        }
    }
}

fn load_tabulated_csv(path: &Path, grid: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut xs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() || line.starts_with('#') {
            continue; // header or comment
        }
        let mut parts = line.split(',');
        let (x, v) = (parts.next(), parts.next());
        let parse = |s: Option<&str>, what: &str| -> Result<f64, CliError> {
            s.ok_or_else(|| {
                CliError::Config(format!("{}:{}: missing {what}", path.display(), lineno + 1))
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| {
                CliError::Config(format!("{}:{}: {what}: {e}", path.display(), lineno + 1))
            })
        };
        xs.push(parse(x, "x")?);
        values.push(parse(v, "value")?);
    }
    if values.len() != grid {
        return Err(CliError::Config(format!(
            "{}: {} samples but the configured grid has {} nodes",
            path.display(),
            values.len(),
            grid
        )));
    }
    let n = xs.len();
    for (i, x) in xs.iter().enumerate() {
        let expected = i as f64 / (n - 1) as f64;
        if (x - expected).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "{}: x[{}] = {} but the uniform grid expects {}",
                path.display(),
                i,
                x,
                expected
            )));
        }
    }
    Ok(values)
}
