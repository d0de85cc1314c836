//! Picard iteration over linearized solves and the `η → 0` continuation.
//!
//! All iterates of one window share a uniform time grid fixed from the
//! initial data, so the stage values of iterate `k` serve directly as the
//! coefficients of iterate `k+1`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linearized::{
    cfl_dt, solve_linearized, transport_step, uniform_dt, CoefficientSource, Forcing,
    LinearProblem, SolveError, SolverSettings, StepPolicy, StepRecord, Trajectory, NODES,
};
use crate::operators::ReformState;
use crate::params::FluidParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub cadence: Option<f64>,
    pub solver: SolverSettings,
    /// Overrides the CFL-derived step before it is rounded to divide the window.
    pub dt: Option<f64>,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            tol: 1e-10,
            max_iter: 50,
            cadence: None,
            solver: SolverSettings::default(),
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardIteration {
    pub k: usize,
    pub s: f64,
    pub linf_delta: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub iterations: Vec<PicardIteration>,
    pub converged: bool,
    pub final_k: usize,
    pub dt: f64,
}

impl PicardTrace {
    /// Least-squares ratio of the geometric fit `S_k ≈ C r^k`, over iterates
    /// with `S_k` above `floor`. `None` with fewer than two such iterates.
    pub fn fitted_ratio(&self, floor: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .iterations
            .iter()
            .filter(|it| it.s > floor)
            .map(|it| (it.k as f64, it.s.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some((sxy / sxx).exp())
    }

    pub fn final_s(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |it| it.s)
    }
}

/// Window, regularization and optional forcing of a nonlinear solve.
pub struct PicardProblem<'a> {
    pub params: &'a FluidParams,
    pub eta: f64,
    pub t_end: f64,
    pub settings: PicardSettings,
    pub forcing: Option<&'a dyn Forcing>,
}

/// `sup_t (|W − W'|² + |ϕ − ϕ'|²)` and the largest pointwise gap, over
/// samples taken at matching times.
pub fn s_metric(a: &Trajectory, b: &Trajectory) -> (f64, f64) {
    let mut s: f64 = 0.0;
    let mut linf: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        let (dv, dp, du) = x.sq_distance(y);
        s = s.max(dv + dp + du);
        linf = linf.max(x.linf_distance(y));
    }
    (s, linf)
}

/// Step used by every iterate of a window.
pub fn window_dt(problem: &PicardProblem<'_>, init: &ReformState) -> f64 {
    let dt0 = problem
        .settings
        .dt
        .unwrap_or_else(|| cfl_dt(problem.params, init, problem.settings.solver.cfl_safety));
    uniform_dt(problem.t_end, dt0)
}

/// Iterate 0: `ϕ` and `φ` advected by the initial velocity, `u` held fixed.
pub fn initial_iterate(problem: &PicardProblem<'_>, init: &ReformState, dt: f64) -> Trajectory {
    let params = problem.params;
    let mut coeff = init.clone();
    coeff.vphi = coeff.vphi.map(|_| 0.0);
    let cs = [&coeff, &coeff, &coeff];
    let mut state = init.clone();
    let t0 = init.time;
    let t_final = t0 + problem.t_end;
    let mut traj = Trajectory {
        samples: vec![init.clone()],
        steps: Vec::new(),
        stages: Vec::new(),
    };
    let mut next_sample = problem.settings.cadence.map(|c| t0 + c);
    while state.time < t_final - 1e-12 * problem.t_end {
        let t = state.time;
        let h = if t + dt > t_final - 1e-9 * dt {
            t_final - t
        } else {
            dt
        };
        let a = transport_step(params, &state.vphi, cs, None, h);
        let b = transport_step(params, &state.phi, cs, None, h);
        let [a0, a1, a2] = a.stages;
        let [b0, b1, b2] = b.stages;
        traj.stages.push([
            ReformState {
                vphi: a0,
                phi: b0,
                u: init.u.clone(),
                time: t,
            },
            ReformState {
                vphi: a1,
                phi: b1,
                u: init.u.clone(),
                time: t + NODES[1] * h,
            },
            ReformState {
                vphi: a2,
                phi: b2,
                u: init.u.clone(),
                time: t + NODES[2] * h,
            },
        ]);
        traj.steps.push(StepRecord {
            t,
            dt: h,
            courant: 0.0,
            nu_bar: 0.0,
            clip_events: 0,
            clipped_mass: 0.0,
            coeff_min: f64::NAN,
        });
        let t_new = if h == t_final - t { t_final } else { t + h };
        state = ReformState {
            vphi: a.next,
            phi: b.next,
            u: init.u.clone(),
            time: t_new,
        };
        let done = state.time >= t_final - 1e-12 * problem.t_end;
        let take = match next_sample.as_mut() {
            None => true,
            Some(ns) => {
                if state.time >= *ns - 1e-9 * h {
                    while *ns <= state.time + 1e-9 * h {
                        *ns += problem.settings.cadence.unwrap_or(0.0);
                    }
                    true
                } else {
                    false
                }
            }
        };
        if take || done {
            traj.samples.push(state.clone());
        }
    }
    traj
}

fn linear_problem<'a>(problem: &PicardProblem<'a>, dt: f64) -> LinearProblem<'a> {
    LinearProblem {
        params: problem.params,
        eta: problem.eta,
        t_end: problem.t_end,
        policy: StepPolicy::Uniform { dt },
        cadence: problem.settings.cadence,
        settings: SolverSettings {
            record_stages: true,
            ..problem.settings.solver
        },
    }
}

/// One linearized solve with coefficients from `prev`.
pub fn picard_step(
    problem: &PicardProblem<'_>,
    init: &ReformState,
    prev: &Trajectory,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    solve_linearized(
        &linear_problem(problem, dt),
        init,
        prev as &dyn CoefficientSource,
        problem.forcing,
    )
}

pub fn picard_solve(
    problem: &PicardProblem<'_>,
    init: &ReformState,
) -> Result<(Trajectory, PicardTrace), SolveError> {
    let dt = window_dt(problem, init);
    let mut current = initial_iterate(problem, init, dt);
    let mut trace = PicardTrace {
        iterations: Vec::new(),
        converged: false,
        final_k: 0,
        dt,
    };
    let clock = Instant::now();
    for k in 1..=problem.settings.max_iter.max(1) {
        let next = picard_step(problem, init, &current, dt)?;
        let (s, linf_delta) = s_metric(&next, &current);
        trace.iterations.push(PicardIteration {
            k,
            s,
            linf_delta,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        trace.final_k = k;
        current = next;
        if s <= problem.settings.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((current, trace))
}

/// S-metric change produced by one further linearized solve.
pub fn fixed_point_residual(
    problem: &PicardProblem<'_>,
    init: &ReformState,
    converged: &Trajectory,
    dt: f64,
) -> Result<f64, SolveError> {
    let again = picard_step(problem, init, converged, dt)?;
    Ok(s_metric(&again, converged).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSchedule {
    pub eta0: f64,
    pub factor: f64,
    pub max_levels: usize,
    pub cauchy_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("eta0 = {0} outside (0, 1]")]
    Eta0(f64),
    #[error("factor = {0} outside (0, 1)")]
    Factor(f64),
    #[error("max_levels must be at least 1")]
    Levels,
}

impl EtaSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(ScheduleError::Eta0(self.eta0));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(ScheduleError::Factor(self.factor));
        }
        if self.max_levels == 0 {
            return Err(ScheduleError::Levels);
        }
        Ok(())
    }

    pub fn level(&self, j: usize) -> f64 {
        self.eta0 * self.factor.powi(j as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub index: usize,
    pub eta: f64,
    pub trace: PicardTrace,
    /// Distance to the previous level; absent on the first level.
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub levels: Vec<LevelReport>,
    pub cauchy_reached: bool,
}

impl ContinuationReport {
    pub fn distances(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuationError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("level {index} (eta = {eta}): {source}")]
    Solve {
        index: usize,
        eta: f64,
        source: SolveError,
    },
    #[error("level {index} (eta = {eta}): Picard did not converge (S = {s:.3e})")]
    NotConverged { index: usize, eta: f64, s: f64 },
}

/// `sup_t` L² distance over all unknowns between trajectories with matching samples.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    s_metric(a, b).0.sqrt()
}

pub fn eta_continuation(
    params: &FluidParams,
    init: &ReformState,
    schedule: &EtaSchedule,
    t_end: f64,
    settings: PicardSettings,
    forcing: Option<&dyn Forcing>,
) -> Result<(Trajectory, ContinuationReport), ContinuationError> {
    schedule.validate()?;
    let mut report = ContinuationReport {
        levels: Vec::new(),
        cauchy_reached: false,
    };
    let mut prev: Option<Trajectory> = None;
    for j in 0..schedule.max_levels {
        let eta = schedule.level(j);
        let problem = PicardProblem {
            params,
            eta,
            t_end,
            settings,
            forcing,
        };
        let (traj, trace) =
            picard_solve(&problem, init).map_err(|source| ContinuationError::Solve {
                index: j,
                eta,
                source,
            })?;
        if !trace.converged {
            return Err(ContinuationError::NotConverged {
                index: j,
                eta,
                s: trace.final_s(),
            });
        }
        let d = prev.as_ref().map(|p| trajectory_distance(&traj, p));
        report.levels.push(LevelReport {
            index: j,
            eta,
            trace,
            d,
        });
        prev = Some(traj);
        if d.is_some_and(|d| d <= schedule.cauchy_tol) {
            report.cauchy_reached = true;
            break;
        }
    }
    Ok((prev.expect("at least one level"), report))
}
