use std::io::Write;
use std::path::Path;

use serde::Serialize;

use degvisc::fields::Grid;
use degvisc::oracle::{mms_orders, primitive_mms_error, reform_mms_error, OrderReport, ReformMode};
use degvisc::params::validate_params;

use crate::bundle::{num, Bundle, Csv};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmsReport {
    pub n: Vec<usize>,
    pub dt: Vec<f64>,
    pub reform: OrderReport,
    pub oracle: OrderReport,
    pub reform_pass: bool,
    pub oracle_pass: bool,
}

impl MmsReport {
    pub fn pass(&self) -> bool {
        self.reform_pass && self.oracle_pass
    }
}

fn within(r: &OrderReport, target: f64, band: f64) -> bool {
    r.all_ok() && r.orders.iter().all(|o| (o - target).abs() <= band)
}

/// Joint refinement study of both solvers on the configured manufactured cases.
pub fn cmd_mms(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> Result<MmsReport, CliError> {
    let params =
        validate_params(cfg.params.raw()).map_err(|e| CliError::Validation(e.to_string()))?;
    let mms = cfg.mms.clone().unwrap_or_default();
    if mms.levels < 3 {
        return Err(CliError::Validation(format!(
            "mms needs at least 3 levels, got {}",
            mms.levels
        )));
    }
    let mut n = Vec::new();
    let mut dt = Vec::new();
    let mut reform_err = Vec::new();
    let mut oracle_err = Vec::new();
    let mode = if mms.picard {
        ReformMode::Picard(cfg.solver.picard())
    } else {
        ReformMode::Linearized
    };
    for j in 0..mms.levels {
        let nj = mms.n0 << j;
        let dtj = mms.dt0 / f64::from(1u32 << j);
        let grid = Grid::new(cfg.grid.dim, nj, cfg.grid.l)
            .map_err(|e| CliError::Validation(format!("grid: {e}")))?;
        mms.primitive_case
            .validate(&grid)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if mms.reform_case.u.len() != cfg.grid.dim {
            return Err(CliError::Validation(
                "reform case velocity does not match the grid dimension".into(),
            ));
        }
        let e_r = reform_mms_error(
            &params,
            &mms.reform_case,
            &grid,
            dtj,
            mms.t_end,
            mms.eta,
            mode,
        )
        .map_err(|e| CliError::runtime("mms reform", None, e.to_string()))?;
        let e_o = primitive_mms_error(&params, &mms.primitive_case, &grid, dtj, mms.t_end)
            .map_err(|e| CliError::runtime("mms oracle", None, e.to_string()))?;
        n.push(nj);
        dt.push(dtj);
        reform_err.push(e_r);
        oracle_err.push(e_o);
    }
    let reform = mms_orders(&reform_err).map_err(|e| CliError::Validation(e.to_string()))?;
    let oracle = mms_orders(&oracle_err).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = MmsReport {
        reform_pass: within(&reform, mms.reform_target, mms.reform_band),
        oracle_pass: within(&oracle, mms.oracle_target, mms.oracle_band),
        n,
        dt,
        reform,
        oracle,
    };

    let bundle = Bundle::create(out)?;
    bundle.write("config.toml", cfg.to_toml().as_bytes())?;
    let mut csv = Csv::new(&[
        "level",
        "n",
        "dt",
        "reform_error",
        "reform_order",
        "oracle_error",
        "oracle_order",
    ]);
    let order = |r: &OrderReport, j: usize| {
        if j == 0 {
            String::new()
        } else {
            num(r.orders[j - 1])
        }
    };
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(
        stdout,
        "{:>5} {:>6} {:>12} {:>14} {:>8} {:>14} {:>8}",
        "level", "n", "dt", "reform_err", "order", "oracle_err", "order"
    )
    .map_err(io)?;
    for j in 0..report.n.len() {
        csv.row([
            j.to_string(),
            report.n[j].to_string(),
            num(report.dt[j]),
            num(report.reform.errors[j]),
            order(&report.reform, j),
            num(report.oracle.errors[j]),
            order(&report.oracle, j),
        ]);
        let o = |r: &OrderReport| {
            if j == 0 {
                "-".to_string()
            } else {
                format!("{:.3}", r.orders[j - 1])
            }
        };
        writeln!(
            stdout,
            "{:>5} {:>6} {:>12.4e} {:>14.6e} {:>8} {:>14.6e} {:>8}",
            j,
            report.n[j],
            report.dt[j],
            report.reform.errors[j],
            o(&report.reform),
            report.oracle.errors[j],
            o(&report.oracle)
        )
        .map_err(io)?;
    }
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    writeln!(
        stdout,
        "reform order target {} +/- {}: {}\noracle order target {} +/- {}: {}",
        mms.reform_target,
        mms.reform_band,
        verdict(report.reform_pass),
        mms.oracle_target,
        mms.oracle_band,
        verdict(report.oracle_pass)
    )
    .map_err(io)?;
    bundle.write_csv("mms.csv", csv)?;
    bundle.write_json("mms.json", &report)?;
    Ok(report)
}
