use std::io::Write;
use std::path::Path;

use serde::Serialize;

use degvisc::oracle::{cross_compare, OracleError, OracleSettings};
use degvisc::params::validate_params;

use crate::bundle::{num, Bundle, Csv};
use crate::config::{DensityInit, RunConfig, VelocityInit};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareLevel {
    pub n: usize,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub sup_distance: f64,
    /// `sup_distance` over that of the previous level.
    pub ratio: Option<f64>,
    pub picard_iterations: usize,
    pub fitted_ratio: Option<f64>,
    pub reform_mass_drift: f64,
    pub oracle_mass_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub eta: f64,
    pub levels: Vec<CompareLevel>,
}

/// Run the reform pipeline and the primitive solver from the same data on
/// successive joint refinements.
pub fn cmd_oracle_compare(
    cfg: &RunConfig,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<CompareReport, CliError> {
    let params =
        validate_params(cfg.params.raw()).map_err(|e| CliError::Validation(e.to_string()))?;
    let block = cfg.compare.unwrap_or_default();
    if block.levels == 0 {
        return Err(CliError::Validation(
            "compare needs at least one level".into(),
        ));
    }
    let snapshot_input = matches!(cfg.initial.density, DensityInit::Snapshot { .. })
        || matches!(cfg.initial.velocity, VelocityInit::Snapshot { .. });
    if snapshot_input && block.levels > 1 {
        return Err(CliError::Validation(
            "snapshot inputs cannot be refined; use levels = 1".into(),
        ));
    }
    let mut levels: Vec<CompareLevel> = Vec::new();
    for j in 0..block.levels {
        let mut c = cfg.clone();
        c.grid.n = cfg.grid.n << j;
        c.solver.dt = cfg.solver.dt.map(|dt| dt / f64::from(1u32 << j));
        let grid = c
            .grid
            .build()
            .map_err(|e| CliError::Validation(format!("grid: {e}")))?;
        let (rho, u) = c.initial_fields(&grid)?;
        let floor = rho.min();
        if floor <= 0.0 {
            return Err(CliError::Validation(
                OracleError::NonPositiveDensity(floor).to_string(),
            ));
        }
        let oracle = OracleSettings {
            cfl_safety: block.oracle_cfl,
            dt: None,
        };
        let res = cross_compare(
            &params,
            &rho,
            &u,
            c.solver.t_end,
            block.eta,
            c.solver.picard(),
            oracle,
        )
        .map_err(|e| CliError::runtime("oracle-compare", None, format!("n = {}: {e}", c.grid.n)))?;
        let ratio = levels.last().map(|p| res.sup_distance / p.sup_distance);
        levels.push(CompareLevel {
            n: c.grid.n,
            ratio,
            picard_iterations: res.reform_trace.final_k,
            fitted_ratio: res.reform_trace.fitted_ratio(0.0),
            times: res.times,
            distance: res.distance,
            sup_distance: res.sup_distance,
            reform_mass_drift: res.reform_mass_drift,
            oracle_mass_drift: res.oracle_mass_drift,
        });
    }
    let report = CompareReport {
        eta: block.eta,
        levels,
    };

    let bundle = Bundle::create(out)?;
    bundle.write("config.toml", cfg.to_toml().as_bytes())?;
    let mut csv = Csv::new(&["n", "t", "distance"]);
    for l in &report.levels {
        for (t, d) in l.times.iter().zip(&l.distance) {
            csv.row([l.n.to_string(), num(*t), num(*d)]);
        }
    }
    bundle.write_csv("compare.csv", csv)?;
    bundle.write_json("compare.json", &report)?;

    let io = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(
        stdout,
        "{:>6} {:>14} {:>8} {:>6} {:>12} {:>12}",
        "n", "sup_dist", "ratio", "iters", "mass_reform", "mass_oracle"
    )
    .map_err(io)?;
    for l in &report.levels {
        writeln!(
            stdout,
            "{:>6} {:>14.6e} {:>8} {:>6} {:>12.3e} {:>12.3e}",
            l.n,
            l.sup_distance,
            l.ratio.map_or("-".to_string(), |r| format!("{r:.4}")),
            l.picard_iterations,
            l.reform_mass_drift,
            l.oracle_mass_drift
        )
        .map_err(io)?;
    }
    Ok(report)
}
