use std::io::Write;

use degvisc::diagnostics::{initial_level, Horizons};
use degvisc::operators::ReformState;
use degvisc::params::{check_initial_compatibility, validate_params, Constraint};

use crate::config::RunConfig;
use crate::error::CliError;

fn w(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))
}

/// Print the constraint report; fails on the first violated constraint or on
/// initial data that breaks the density cap.
pub fn cmd_validate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let raw = cfg.params.raw();
    w(
        out,
        format!("{:<28} {:>14}  status", "constraint", "margin"),
    )?;
    let mut first_bad = None;
    for c in Constraint::ORDER {
        let ok = c.holds(&raw);
        if !ok && first_bad.is_none() {
            first_bad = Some(c);
        }
        w(
            out,
            format!(
                "{:<28} {:>14.6e}  {}",
                c.describe(),
                c.margin(&raw),
                if ok { "ok" } else { "FAIL" }
            ),
        )?;
    }
    if let Some(c) = first_bad {
        return Err(CliError::Validation(format!(
            "constraint violated: {} (margin {:.6e})",
            c.describe(),
            c.margin(&raw)
        )));
    }
    let params = validate_params(raw).map_err(|e| CliError::Validation(e.to_string()))?;
    w(out, format!("a1 = {:.12e}", params.a1))?;
    w(out, format!("m  = {:.12e}", params.m))?;

    let grid = cfg
        .grid
        .build()
        .map_err(|e| CliError::Validation(format!("grid: {e}")))?;
    let (rho, u) = cfg.initial_fields(&grid)?;
    let compat = check_initial_compatibility(&params, &rho);
    let cap = compat
        .density_cap
        .map_or("none".to_string(), |c| format!("{c:.6e}"));
    w(
        out,
        format!(
            "density compatibility: density cap {cap}, max rho0 = {:.6e}, min alpha+beta*vphi^2m = {:.6e}  {}",
            compat.max_density,
            compat.margin,
            if compat.pass { "ok" } else { "FAIL" }
        ),
    )?;
    if !compat.pass {
        return Err(CliError::Validation(format!(
            "density compatibility violated: max rho0 = {:.6e} exceeds the density cap {cap}",
            compat.max_density
        )));
    }
    let init = ReformState::from_density(&params, &rho, u, 0.0);
    let c0 = initial_level(&init);
    let c3 = cfg.params.calib_c.sqrt() * c0;
    let h = Horizons::new(cfg.solver.t_end, c3, params.m);
    w(
        out,
        format!("horizon preview: c0 = {c0:.6e}, c3 = {c3:.6e}"),
    )?;
    w(
        out,
        format!(
            "  T = {:.6e}, T** = {:.6e}, T1 = {:.6e}, T2 = {:.6e}, T3 = {:.6e}",
            cfg.solver.t_end, h.t_star_star, h.t1, h.t2, h.t3
        ),
    )?;
    Ok(())
}
