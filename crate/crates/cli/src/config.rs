//! Run configuration, read from a single TOML file.
//!
//! Every block rejects unknown keys. Defaults are filled in on load, and the
//! resolved form (see [`RunConfig::to_toml`]) is what a run writes next to its
//! outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use degvisc::fields::{snapshot, FieldError, Grid, ScalarField, VectorField};
use degvisc::fixedpoint::{EtaSchedule, PicardSettings};
use degvisc::linearized::SolverSettings;
use degvisc::oracle::{ManufacturedCase, ReformCase, TrigMode, TrigSeries};
use degvisc::params::RawParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsBlock,
    pub grid: GridBlock,
    pub initial: InitialBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Calibration constant scaling the ledger thresholds.
    #[serde(rename = "calib_C", default = "one")]
    pub calib_c: f64,
}

impl ParamsBlock {
    pub fn raw(&self) -> RawParams {
        RawParams::new(
            self.a,
            self.gamma,
            self.alpha,
            self.beta,
            self.delta1,
            self.delta2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl GridBlock {
    pub fn build(&self) -> Result<Grid, FieldError> {
        Grid::new(self.dim, self.n, self.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub density: DensityInit,
    #[serde(default)]
    pub velocity: VelocityInit,
    /// Multiplies the bump amplitude and every velocity mode amplitude.
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityInit {
    /// `background + amplitude·exp(−|x−c|²/width²)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        background: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `background + amplitude·exp(1 − 1/(1 − |x−c|²/radius²))` inside the
    /// ball, `background` outside; smooth, with genuine vacuum when the
    /// background is zero.
    CompactBump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        background: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    Constant {
        value: f64,
    },
    Snapshot {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityMode {
    pub component: usize,
    pub amplitude: f64,
    /// Integer wavenumbers; the mode is `amplitude·sin(2π/L k·x + phase)`.
    pub k: [i32; 3],
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityInit {
    Modes {
        #[serde(default)]
        modes: Vec<VelocityMode>,
    },
    Snapshot {
        path: PathBuf,
    },
}

impl Default for VelocityInit {
    fn default() -> Self {
        VelocityInit::Modes { modes: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaBlock {
    /// First regularization level; `0` runs the unregularized problem once.
    pub eta0: f64,
    pub factor: f64,
    pub levels: usize,
    pub cauchy_tol: f64,
}

impl Default for EtaBlock {
    fn default() -> Self {
        EtaBlock {
            eta0: 0.5,
            factor: 0.5,
            levels: 5,
            cauchy_tol: 0.0,
        }
    }
}

impl EtaBlock {
    pub fn schedule(&self) -> EtaSchedule {
        EtaSchedule {
            eta0: self.eta0,
            factor: self.factor,
            max_levels: self.levels,
            cauchy_tol: self.cauchy_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Sampling interval of the trajectory; every step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<f64>,
    /// Fixed step (rounded to divide `T`); CFL-derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub cfl_safety: f64,
    pub enforce_validity: bool,
    pub clip: bool,
    pub eta: EtaBlock,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            t_end: 0.1,
            cadence: None,
            dt: None,
            picard_tol: 1e-10,
            max_iter: 50,
            cfl_safety: 0.4,
            enforce_validity: true,
            clip: true,
            eta: EtaBlock::default(),
        }
    }
}

impl SolverBlock {
    pub fn picard(&self) -> PicardSettings {
        PicardSettings {
            tol: self.picard_tol,
            max_iter: self.max_iter,
            cadence: self.cadence,
            dt: self.dt,
            solver: SolverSettings {
                cfl_safety: self.cfl_safety,
                clip: self.clip,
                enforce_validity: self.enforce_validity,
                record_stages: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    Conservation,
    Vacuum,
    Characteristics,
    Residual,
    Ellipticity,
}

impl Diagnostic {
    pub const ALL: [Diagnostic; 5] = [
        Diagnostic::Conservation,
        Diagnostic::Vacuum,
        Diagnostic::Characteristics,
        Diagnostic::Residual,
        Diagnostic::Ellipticity,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    /// Diagnostics beyond the ledger and validity verdict, which always run.
    pub diagnostics: Vec<Diagnostic>,
    pub snapshots: bool,
    pub particles: usize,
    pub ellipticity_samples: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: PathBuf::from("out"),
            diagnostics: Diagnostic::ALL.to_vec(),
            snapshots: false,
            particles: 32,
            ellipticity_samples: 10_000,
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, d: Diagnostic) -> bool {
        self.diagnostics.contains(&d)
    }
}

/// Axes of a sweep: dotted config paths mapped to the values they take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axes: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsBlock {
    /// Number of joint refinement levels (at least 3).
    pub levels: usize,
    /// Coarsest grid; each level doubles it.
    pub n0: usize,
    /// Coarsest step; each level halves it.
    pub dt0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub eta: f64,
    /// Use the Picard iteration instead of a single linearized solve.
    pub picard: bool,
    pub reform_case: ReformCase,
    pub primitive_case: ManufacturedCase,
    pub reform_target: f64,
    pub reform_band: f64,
    pub oracle_target: f64,
    pub oracle_band: f64,
}

fn mode(amp: f64, k: i32, phase: f64, omega: f64) -> TrigMode {
    TrigMode {
        amp,
        k: [k, 0, 0],
        phase,
        omega,
    }
}

impl Default for MmsBlock {
    fn default() -> Self {
        MmsBlock {
            levels: 3,
            n0: 128,
            dt0: 0.01,
            t_end: 0.5,
            eta: 0.0,
            picard: false,
            reform_case: ReformCase {
                vphi: TrigSeries {
                    mean: 1.0,
                    modes: vec![mode(0.1, 1, 0.0, 1.0)],
                },
                phi: TrigSeries {
                    mean: 1.0,
                    modes: vec![mode(0.1, 1, 1.0, -1.0)],
                },
                u: vec![TrigSeries {
                    mean: 0.0,
                    modes: vec![mode(0.3, 1, 0.5, 1.0), mode(0.1, 2, 0.0, 2.0)],
                }],
            },
            primitive_case: ManufacturedCase {
                rho: TrigSeries {
                    mean: 1.0,
                    modes: vec![mode(0.2, 1, 0.0, 1.0)],
                },
                u: vec![TrigSeries {
                    mean: 0.0,
                    modes: vec![mode(0.3, 1, 0.5, -1.0), mode(0.1, 2, 0.0, 2.0)],
                }],
            },
            reform_target: 3.0,
            reform_band: 0.2,
            oracle_target: 4.0,
            oracle_band: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    /// Number of joint refinement levels starting from the configured grid.
    pub levels: usize,
    pub eta: f64,
    pub oracle_cfl: f64,
}

impl Default for CompareBlock {
    fn default() -> Self {
        CompareBlock {
            levels: 1,
            eta: 0.0,
            oracle_cfl: 0.4,
        }
    }
}

fn one() -> f64 {
    1.0
}

// Partial blocks let `[mms]` and `[compare]` be written with only the keys
// that differ from the defaults.
macro_rules! fill_defaults {
    ($value:expr, $default:expr) => {{
        let mut base = toml::Value::try_from($default).expect("defaults serialize");
        merge(&mut base, $value);
        base
    }};
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Parse TOML text, filling defaults of the optional blocks.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Self::fill(&mut value);
        value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))
    }

    fn fill(value: &mut toml::Value) {
        let Some(table) = value.as_table_mut() else {
            return;
        };
        if let Some(v) = table.remove("solver") {
            table.insert("solver".into(), fill_defaults!(v, SolverBlock::default()));
        }
        if let Some(v) = table.remove("output") {
            table.insert("output".into(), fill_defaults!(v, OutputBlock::default()));
        }
        if let Some(v) = table.remove("mms") {
            table.insert("mms".into(), fill_defaults!(v, MmsBlock::default()));
        }
        if let Some(v) = table.remove("compare") {
            table.insert("compare".into(), fill_defaults!(v, CompareBlock::default()));
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Make snapshot paths relative to the directory of the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DensityInit::Snapshot { path } = &mut self.initial.density {
            fix(path);
        }
        if let VelocityInit::Snapshot { path } = &mut self.initial.velocity {
            fix(path);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Set the value at a dotted path, then re-read the whole config so that
    /// the result is schema-checked.
    pub fn with_override(&self, path: &str, value: &toml::Value) -> Result<RunConfig, CliError> {
        let mut root = toml::Value::try_from(self).expect("config serializes");
        let mut slot = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| {
                CliError::Validation(format!("sweep axis {path}: {part} is not inside a table"))
            })?;
            if i + 1 == parts.len() {
                table.insert((*part).to_string(), value.clone());
                break;
            }
            slot = table.get_mut(*part).ok_or_else(|| {
                CliError::Validation(format!("sweep axis {path}: no block named {part}"))
            })?;
        }
        root.try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("sweep axis {path}: {e}")))
    }

    /// Initial density and velocity on the configured grid.
    pub fn initial_fields(&self, grid: &Grid) -> Result<(ScalarField, VectorField), CliError> {
        let init = &self.initial;
        let dim = grid.dim();
        let r2 =
            |x: &[f64], c: &[f64; 3]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let rho = match &init.density {
            DensityInit::Gaussian {
                amplitude,
                width,
                background,
                center,
            } => {
                let a = amplitude * init.scale;
                ScalarField::from_fn(grid, |x| {
                    background + a * (-r2(x, center) / (width * width)).exp()
                })
            }
            DensityInit::CompactBump {
                amplitude,
                radius,
                background,
                center,
            } => {
                let a = amplitude * init.scale;
                ScalarField::from_fn(grid, |x| {
                    let s = r2(x, center) / (radius * radius);
                    if s < 1.0 {
                        background + a * (1.0 - 1.0 / (1.0 - s)).exp()
                    } else {
                        *background
                    }
                })
            }
            DensityInit::Constant { value } => ScalarField::constant(grid, *value),
            DensityInit::Snapshot { path } => {
                let snap = read_snapshot(path, grid)?;
                if snap.role != snapshot::Role::Rho {
                    return Err(CliError::Validation(format!(
                        "{}: not a density snapshot",
                        path.display()
                    )));
                }
                snap.into_scalar()
            }
        };
        let u = match &init.velocity {
            VelocityInit::Modes { modes } => {
                for m in modes {
                    if m.component >= dim {
                        return Err(CliError::Validation(format!(
                            "velocity mode component {} out of range for dimension {dim}",
                            m.component
                        )));
                    }
                }
                let k0 = 2.0 * std::f64::consts::PI / grid.box_length();
                VectorField::from_fn(grid, |x, c| {
                    modes
                        .iter()
                        .filter(|m| m.component == c)
                        .map(|m| {
                            let arg: f64 =
                                x.iter().zip(&m.k).map(|(a, &k)| k0 * k as f64 * a).sum();
                            init.scale * m.amplitude * (arg + m.phase).sin()
                        })
                        .sum()
                })
            }
            VelocityInit::Snapshot { path } => {
                let snap = read_snapshot(path, grid)?;
                if snap.role != snapshot::Role::Velocity {
                    return Err(CliError::Validation(format!(
                        "{}: not a velocity snapshot",
                        path.display()
                    )));
                }
                snap.into_vector()
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            }
        };
        if !rho.is_finite() || !u.is_finite() {
            return Err(CliError::Validation("initial data is not finite".into()));
        }
        if rho.min() < 0.0 {
            return Err(CliError::Validation(format!(
                "initial density is negative (min {:.3e})",
                rho.min()
            )));
        }
        Ok((rho, u))
    }

    /// Snapshot inputs, for content hashing.
    pub fn snapshot_inputs(&self) -> Vec<(&'static str, &Path)> {
        let mut out = Vec::new();
        if let DensityInit::Snapshot { path } = &self.initial.density {
            out.push(("density", path.as_path()));
        }
        if let VelocityInit::Snapshot { path } = &self.initial.velocity {
            out.push(("velocity", path.as_path()));
        }
        out
    }
}

fn read_snapshot(path: &Path, grid: &Grid) -> Result<snapshot::Snapshot, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let snap = snapshot::read(&mut std::io::BufReader::new(file)).map_err(|e| match e {
        snapshot::SnapshotError::Io(io) => CliError::io(path, io),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })?;
    if snap.grid() != grid {
        return Err(CliError::Validation(format!(
            "{}: snapshot grid does not match the config grid",
            path.display()
        )));
    }
    Ok(snap)
}
