use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use degvisc::diagnostics::{
    characteristics_check, conservation, initial_level, ledger, nonlinear_residual, support_check,
    trajectory_vacuum_residual, validity, AprioriLedger, CharacteristicsReport, Horizons,
    ResidualReport, VacuumResidual, ValidityReason, ValidityVerdict, VAC_EPS,
};
use degvisc::fields::{snapshot, NormReport};
use degvisc::fixedpoint::{
    eta_continuation, picard_solve, ContinuationError, ContinuationReport, LevelReport,
    PicardProblem,
};
use degvisc::linearized::{SolveError, Trajectory};
use degvisc::operators::{ellipticity_check, EllipticityReport, ReformState};
use degvisc::params::{
    check_initial_compatibility, validate_params, CompatibilityReport, FluidParams,
};

use crate::bundle::{content_hash, hash_file, num, Bundle, Csv};
use crate::config::{Diagnostic, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The solver stopped on the validity guard; `t_valid` is the abort time.
    ValidityLost,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub phase: String,
    pub time: Option<f64>,
    pub level: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inputs {
    pub config: String,
    pub snapshots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub a1: f64,
    pub m: f64,
    pub density_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub index: usize,
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_s: f64,
    pub fitted_ratio: Option<f64>,
    pub d: Option<f64>,
    pub dt: f64,
}

impl LevelSummary {
    fn new(l: &LevelReport) -> Self {
        LevelSummary {
            index: l.index,
            eta: l.eta,
            iterations: l.trace.final_k,
            converged: l.trace.converged,
            final_s: l.trace.final_s(),
            fitted_ratio: l.trace.fitted_ratio(0.0),
            d: l.d,
            dt: l.trace.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub calib_c: f64,
    pub m: f64,
    pub t_window: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub thresholds: [f64; 4],
    pub horizons: Horizons,
    pub max_ratios: Option<[f64; 4]>,
    pub first_crossing: Option<f64>,
}

impl LedgerSummary {
    fn from_ledger(l: &AprioriLedger) -> Self {
        LedgerSummary {
            calib_c: l.calib_c,
            m: l.m,
            t_window: l.t_window,
            c0: l.c0,
            c1: l.c1,
            c2: l.c2,
            c3: l.c3,
            thresholds: l.thresholds,
            horizons: l.horizons,
            max_ratios: Some(l.max_ratios()),
            first_crossing: l.first_crossing(),
        }
    }

    /// Levels and horizons from the initial data alone.
    fn from_initial(init: &ReformState, params: &FluidParams, calib_c: f64, t_window: f64) -> Self {
        let c0 = initial_level(init);
        let c = calib_c.sqrt() * c0;
        let m = params.m;
        LedgerSummary {
            calib_c,
            m,
            t_window,
            c0,
            c1: c,
            c2: c,
            c3: c,
            thresholds: [c * c, c * c, c * c, c.powf(4.0 * m + 4.0)],
            horizons: Horizons::new(t_window, c, m),
            max_ratios: None,
            first_crossing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateNorms {
    /// `‖·‖_s`, `s = 0..3`.
    pub vphi: [f64; 4],
    pub phi: [f64; 4],
    pub u: [f64; 4],
    pub rho_max: f64,
}

impl StateNorms {
    fn new(s: &ReformState, params: &FluidParams) -> Self {
        StateNorms {
            vphi: NormReport::scalar(&s.vphi).h_norms,
            phi: NormReport::scalar(&s.phi).h_norms,
            u: NormReport::vector(&s.u, None).expect("no weight").h_norms,
            rho_max: s.density(params).max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationSummary {
    pub initial_mass: f64,
    pub max_mass_drift: f64,
    pub max_momentum_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub failure: Option<Failure>,
    pub seed: u64,
    pub inputs: Inputs,
    pub derived: Option<Derived>,
    pub compatibility: Option<CompatibilityReport>,
    pub continuation: Vec<LevelSummary>,
    pub cauchy_reached: bool,
    pub eta_final: Option<f64>,
    pub steps: usize,
    pub samples: usize,
    pub clip_events: usize,
    pub t_valid: Option<f64>,
    pub validity: Option<ValidityVerdict>,
    pub ledger: Option<LedgerSummary>,
    pub initial_norms: Option<StateNorms>,
    pub final_norms: Option<StateNorms>,
    pub conservation: Option<ConservationSummary>,
    pub vacuum: Option<VacuumResidual>,
    pub characteristics: Option<CharacteristicsReport>,
    pub residual: Option<ResidualReport>,
    pub ellipticity: Option<EllipticityReport>,
}

impl RunSummary {
    fn empty(seed: u64, inputs: Inputs) -> Self {
        RunSummary {
            status: RunStatus::Ok,
            failure: None,
            seed,
            inputs,
            derived: None,
            compatibility: None,
            continuation: Vec::new(),
            cauchy_reached: false,
            eta_final: None,
            steps: 0,
            samples: 0,
            clip_events: 0,
            t_valid: None,
            validity: None,
            ledger: None,
            initial_norms: None,
            final_norms: None,
            conservation: None,
            vacuum: None,
            characteristics: None,
            residual: None,
            ellipticity: None,
        }
    }
}

/// Everything a run needs, checked.
pub struct Prepared {
    pub params: FluidParams,
    pub init: ReformState,
    pub compatibility: CompatibilityReport,
    pub vacuum_data: bool,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let params =
        validate_params(cfg.params.raw()).map_err(|e| CliError::Validation(e.to_string()))?;
    if !(cfg.params.calib_c > 0.0 && cfg.params.calib_c.is_finite()) {
        return Err(CliError::Validation(format!(
            "calib_C = {} must be positive",
            cfg.params.calib_c
        )));
    }
    if !(cfg.solver.t_end > 0.0 && cfg.solver.t_end.is_finite()) {
        return Err(CliError::Validation(format!(
            "T = {} must be positive",
            cfg.solver.t_end
        )));
    }
    if cfg.solver.eta.eta0 != 0.0 {
        cfg.solver
            .eta
            .schedule()
            .validate()
            .map_err(|e| CliError::Validation(format!("eta schedule: {e}")))?;
    }
    let grid = cfg
        .grid
        .build()
        .map_err(|e| CliError::Validation(format!("grid: {e}")))?;
    let (rho, u) = cfg.initial_fields(&grid)?;
    let compatibility = check_initial_compatibility(&params, &rho);
    if !compatibility.pass {
        return Err(CliError::Validation(format!(
            "density compatibility violated: max rho0 = {:.6e} exceeds the density cap {:.6e}",
            compatibility.max_density,
            compatibility.density_cap.unwrap_or(f64::NAN)
        )));
    }
    let vacuum_data = rho.min() < VAC_EPS && rho.max() > VAC_EPS;
    let init = ReformState::from_density(&params, &rho, u, 0.0);
    Ok(Prepared {
        params,
        init,
        compatibility,
        vacuum_data,
    })
}

enum SolveOutcome {
    Done(Trajectory, ContinuationReport, f64),
    ValidityLost {
        time: f64,
        level: usize,
        report: ContinuationReport,
    },
}

fn solve(cfg: &RunConfig, prep: &Prepared) -> Result<SolveOutcome, (CliError, Option<usize>)> {
    let settings = cfg.solver.picard();
    let t_end = cfg.solver.t_end;
    if cfg.solver.eta.eta0 == 0.0 {
        let problem = PicardProblem {
            params: &prep.params,
            eta: 0.0,
            t_end,
            settings,
            forcing: None,
        };
        return match picard_solve(&problem, &prep.init) {
            Ok((traj, trace)) => {
                if !trace.converged {
                    return Err((
                        CliError::runtime(
                            "continuation",
                            None,
                            format!("Picard did not converge (S = {:.3e})", trace.final_s()),
                        ),
                        Some(0),
                    ));
                }
                let report = ContinuationReport {
                    levels: vec![LevelReport {
                        index: 0,
                        eta: 0.0,
                        trace,
                        d: None,
                    }],
                    cauchy_reached: false,
                };
                Ok(SolveOutcome::Done(traj, report, 0.0))
            }
            Err(SolveError::Validity { time, .. }) => Ok(SolveOutcome::ValidityLost {
                time,
                level: 0,
                report: ContinuationReport {
                    levels: Vec::new(),
                    cauchy_reached: false,
                },
            }),
            Err(e) => Err((
                CliError::runtime("continuation", e.time(), e.to_string()),
                Some(0),
            )),
        };
    }
    let schedule = cfg.solver.eta.schedule();
    match eta_continuation(&prep.params, &prep.init, &schedule, t_end, settings, None) {
        Ok((traj, report)) => {
            let eta = report.levels.last().map_or(schedule.eta0, |l| l.eta);
            Ok(SolveOutcome::Done(traj, report, eta))
        }
        Err(ContinuationError::Solve {
            index,
            source: SolveError::Validity { time, .. },
            ..
        }) => Ok(SolveOutcome::ValidityLost {
            time,
            level: index,
            report: ContinuationReport {
                levels: Vec::new(),
                cauchy_reached: false,
            },
        }),
        Err(ContinuationError::Solve { index, eta, source }) => Err((
            CliError::runtime(
                "continuation",
                source.time(),
                format!("level {index} (eta = {eta}): {source}"),
            ),
            Some(index),
        )),
        Err(e @ ContinuationError::NotConverged { index, .. }) => Err((
            CliError::runtime("continuation", None, e.to_string()),
            Some(index),
        )),
        Err(e) => Err((CliError::Validation(e.to_string()), None)),
    }
}

fn failure_of(err: &CliError, phase_default: &str, level: Option<usize>) -> Failure {
    match err {
        CliError::Runtime {
            phase,
            time,
            message,
        } => Failure {
            phase: phase.clone(),
            time: *time,
            level,
            message: message.clone(),
        },
        other => Failure {
            phase: phase_default.into(),
            time: None,
            level,
            message: other.to_string(),
        },
    }
}

/// Hashes of the resolved config and of every snapshot input.
pub fn input_hashes(cfg: &RunConfig) -> Result<(String, Inputs), CliError> {
    let text = cfg.to_toml();
    let mut snapshots = BTreeMap::new();
    for (role, path) in cfg.snapshot_inputs() {
        snapshots.insert(role.to_string(), hash_file(path)?);
    }
    let config = content_hash(text.as_bytes());
    Ok((text, Inputs { config, snapshots }))
}

/// Execute the continuation pipeline and diagnostics, writing the bundle to
/// `out`. A failure still leaves `summary.json` with the failure record.
pub fn cmd_run(cfg: &RunConfig, out: &Path, snapshots: bool) -> Result<RunSummary, CliError> {
    let bundle = Bundle::create(out)?;
    let (text, inputs) = input_hashes(cfg)?;
    bundle.write("config.toml", text.as_bytes())?;
    let mut summary = RunSummary::empty(cfg.seed, inputs);

    let prep = match prepare(cfg) {
        Ok(p) => p,
        Err(e) => {
            summary.status = if e.exit_code() == 1 {
                RunStatus::Rejected
            } else {
                RunStatus::Failed
            };
            summary.failure = Some(failure_of(&e, "validate", None));
            bundle.write_json("summary.json", &summary)?;
            return Err(e);
        }
    };
    let params = &prep.params;
    summary.derived = Some(Derived {
        a1: params.a1,
        m: params.m,
        density_cap: params.a2_density_cap,
    });
    summary.compatibility = Some(prep.compatibility.clone());
    summary.initial_norms = Some(StateNorms::new(&prep.init, params));

    let (traj, report, eta) = match solve(cfg, &prep) {
        Ok(SolveOutcome::Done(t, r, eta)) => (t, r, eta),
        Ok(SolveOutcome::ValidityLost {
            time,
            level,
            report,
        }) => {
            summary.status = RunStatus::ValidityLost;
            summary.continuation = report.levels.iter().map(LevelSummary::new).collect();
            summary.t_valid = Some(time);
            summary.validity = Some(ValidityVerdict {
                t_valid: time,
                t_end: cfg.solver.t_end,
                reasons: vec![ValidityReason::SolverAbort],
            });
            summary.failure = Some(Failure {
                phase: "continuation".into(),
                time: Some(time),
                level: Some(level),
                message: "bulk coefficient fell below alpha/2".into(),
            });
            summary.ledger = Some(LedgerSummary::from_initial(
                &prep.init,
                params,
                cfg.params.calib_c,
                cfg.solver.t_end,
            ));
            bundle.write_json("summary.json", &summary)?;
            return Ok(summary);
        }
        Err((e, level)) => {
            summary.status = RunStatus::Failed;
            summary.failure = Some(failure_of(&e, "continuation", level));
            bundle.write_json("summary.json", &summary)?;
            return Err(e);
        }
    };

    summary.continuation = report.levels.iter().map(LevelSummary::new).collect();
    summary.cauchy_reached = report.cauchy_reached;
    summary.eta_final = Some(eta);
    summary.steps = traj.steps.len();
    summary.samples = traj.samples.len();
    summary.clip_events = traj.steps.iter().map(|s| s.clip_events).sum();

    let led = ledger(&traj, params, cfg.params.calib_c, cfg.solver.t_end);
    let guard = prep.vacuum_data && support_check(&prep.init.density(params)).ok;
    let verdict = validity(&traj, params, &led, guard);
    summary.t_valid = Some(verdict.t_valid);
    summary.validity = Some(verdict);
    summary.ledger = Some(LedgerSummary::from_ledger(&led));
    summary.final_norms = Some(StateNorms::new(traj.last(), params));

    let o = &cfg.output;
    let cons = conservation(&traj, params);
    if o.wants(Diagnostic::Conservation) {
        summary.conservation = Some(ConservationSummary {
            initial_mass: cons.mass.first().copied().unwrap_or(0.0),
            max_mass_drift: cons.max_mass_drift,
            max_momentum_drift: cons.max_momentum_drift,
        });
    }
    let enough = traj.samples.len() >= 3;
    if o.wants(Diagnostic::Vacuum) && enough {
        summary.vacuum = Some(trajectory_vacuum_residual(&traj, params, VAC_EPS));
    }
    if o.wants(Diagnostic::Characteristics) && traj.samples.len() >= 2 {
        summary.characteristics = Some(characteristics_check(&traj, params, o.particles, VAC_EPS));
    }
    if o.wants(Diagnostic::Residual) && enough {
        summary.residual = Some(nonlinear_residual(&traj, params, eta, None));
    }
    if o.wants(Diagnostic::Ellipticity) {
        summary.ellipticity = Some(ellipticity_check(
            params,
            &traj.last().vphi,
            o.ellipticity_samples,
            cfg.seed,
        ));
    }

    bundle.write_csv("ledger.csv", ledger_csv(&led))?;
    bundle.write_csv("picard.csv", picard_csv(&report))?;
    bundle.write_csv("continuation.csv", continuation_csv(&report))?;
    bundle.write_csv("timings.csv", timings_csv(&report))?;
    bundle.write_csv("steps.csv", steps_csv(&traj))?;
    if o.wants(Diagnostic::Conservation) {
        let mut c = Csv::new(&["t", "mass", "momentum_norm"]);
        for (i, t) in cons.t.iter().enumerate() {
            let p = cons.momentum[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            c.row([num(*t), num(cons.mass[i]), num(p)]);
        }
        bundle.write_csv("conservation.csv", c)?;
    }
    if snapshots || o.snapshots {
        write_snapshots(&bundle, traj.last(), params)?;
    }
    bundle.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn write_snapshots(bundle: &Bundle, s: &ReformState, params: &FluidParams) -> Result<(), CliError> {
    let enc = |f: &dyn Fn(&mut Vec<u8>) -> Result<(), snapshot::SnapshotError>| {
        let mut buf = Vec::new();
        f(&mut buf).expect("writing to memory");
        buf
    };
    let rho = s.density(params);
    bundle.write(
        "snapshots/rho.snap",
        &enc(&|b| snapshot::write_scalar(b, snapshot::Role::Rho, &rho, s.time)),
    )?;
    bundle.write(
        "snapshots/phi.snap",
        &enc(&|b| snapshot::write_scalar(b, snapshot::Role::Phi, &s.phi, s.time)),
    )?;
    bundle.write(
        "snapshots/vphi.snap",
        &enc(&|b| snapshot::write_scalar(b, snapshot::Role::Vphi, &s.vphi, s.time)),
    )?;
    bundle.write(
        "snapshots/u.snap",
        &enc(&|b| snapshot::write_vector(b, &s.u, s.time)),
    )?;
    Ok(())
}

const LEDGER_HEADER: [&str; 34] = [
    "t",
    "vphi_h1",
    "vphi_h2",
    "vphi_h3",
    "phi_h1",
    "phi_h2",
    "phi_h3",
    "u_h1",
    "u_h2",
    "u_h3",
    "vphi_d2",
    "vphi_d3",
    "phi_d2",
    "phi_d3",
    "u_d2",
    "u_d3",
    "int_vphi_d2u",
    "int_vphi_d3u",
    "int_vphi_d4u",
    "vphi_t_h2",
    "phi_t_h2",
    "u_t_h1",
    "int_u_t_d2",
    "L1",
    "L2",
    "L3",
    "L4",
    "c3",
    "m",
    "T",
    "T1",
    "T2",
    "T3",
    "T_star_star",
];

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn ledger_csv(l: &AprioriLedger) -> Csv {
    let mut c = Csv::new(&LEDGER_HEADER);
    for r in &l.rows {
        let mut cells = vec![num(r.t)];
        cells.extend(
            r.vphi_h
                .iter()
                .chain(&r.phi_h)
                .chain(&r.u_h)
                .map(|v| num(*v)),
        );
        cells.extend(
            r.vphi_d
                .iter()
                .chain(&r.phi_d)
                .chain(&r.u_d)
                .map(|v| num(*v)),
        );
        cells.extend(r.weighted_integrals.iter().map(|v| num(*v)));
        cells.extend((0..3).map(|i| opt(r.time_norms.map(|n| n[i]))));
        cells.push(opt(r.ut_d2_integral));
        cells.extend(r.levels.iter().map(|v| num(*v)));
        let h = &l.horizons;
        cells.extend([l.c3, l.m, l.t_window, h.t1, h.t2, h.t3, h.t_star_star].map(num));
        c.row(cells);
    }
    c
}

fn picard_csv(r: &ContinuationReport) -> Csv {
    let mut c = Csv::new(&["level", "eta", "k", "s", "linf_delta"]);
    for l in &r.levels {
        for it in &l.trace.iterations {
            c.row([
                l.index.to_string(),
                num(l.eta),
                it.k.to_string(),
                num(it.s),
                num(it.linf_delta),
            ]);
        }
    }
    c
}

fn continuation_csv(r: &ContinuationReport) -> Csv {
    let mut c = Csv::new(&["level", "eta", "iterations", "converged", "final_s", "d"]);
    for l in &r.levels {
        c.row([
            l.index.to_string(),
            num(l.eta),
            l.trace.final_k.to_string(),
            l.trace.converged.to_string(),
            num(l.trace.final_s()),
            opt(l.d),
        ]);
    }
    c
}

fn timings_csv(r: &ContinuationReport) -> Csv {
    let mut c = Csv::new(&["level", "eta", "k", "wall_time"]);
    for l in &r.levels {
        for it in &l.trace.iterations {
            c.row([
                l.index.to_string(),
                num(l.eta),
                it.k.to_string(),
                num(it.wall_time),
            ]);
        }
    }
    c
}

fn steps_csv(traj: &Trajectory) -> Csv {
    let mut c = Csv::new(&[
        "t",
        "dt",
        "courant",
        "nu_bar",
        "clip_events",
        "clipped_mass",
        "coeff_min",
    ]);
    for s in &traj.steps {
        c.row([
            num(s.t),
            num(s.dt),
            num(s.courant),
            num(s.nu_bar),
            s.clip_events.to_string(),
            num(s.clipped_mass),
            num(s.coeff_min),
        ]);
    }
    c
}
