//! Linearized solves on a time window.
//!
//! A step first advances `ϕ` by transport with known velocity and source,
//! then advances `(φ, u)` with convection and source coefficients from a
//! known state and viscosity from the freshly computed `ϕ`.
//!
//! Time integration is a three-stage Heun scheme (nodes 0, 1/3, 2/3). For
//! `u` it runs in integrating-factor form around the constant-coefficient
//! operator `ν̄(Δu + ∇div u)`, with `ν̄` the largest viscous coefficient
//! seen by the step, so the viscous term never limits `dt`. Every explicit
//! rate is passed through the 2/3 filter before use.

use std::borrow::Cow;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldError, Grid, ScalarField, Spectrum, VectorField};
use crate::operators::{pow_nonneg, symmetric_rates, transport_rate, ReformState};
use crate::params::FluidParams;

/// Stage nodes of the scheme.
pub const NODES: [f64; 3] = [0.0, 1.0 / 3.0, 2.0 / 3.0];

/// Largest admissible Courant number. The filtered spectral operator has
/// its top eigenvalue at `π/(1.5 h)` and the scheme reaches `√3` on the
/// imaginary axis.
pub const CFL_LIMIT: f64 = 0.8;

pub const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("CFL violation at t = {time}: Courant number {courant:.3} exceeds {limit}")]
    Cfl { time: f64, courant: f64, limit: f64 },
    #[error("validity lost at t = {time}: min(α+βϕ^2m) = {coeff_min:.6e} < α/2")]
    Validity { time: f64, coeff_min: f64 },
    #[error("non-finite value at t = {time}")]
    NonFinite { time: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("coefficient trajectory has no stage record for step {0}")]
    MissingStages(usize),
    #[error("invalid window: {0}")]
    Window(String),
}

impl SolveError {
    /// Time of failure, when one applies.
    pub fn time(&self) -> Option<f64> {
        match self {
            SolveError::Cfl { time, .. }
            | SolveError::Validity { time, .. }
            | SolveError::NonFinite { time } => Some(*time),
            _ => None,
        }
    }
}

/// Supplies `(ϕ̃, φ̃, v)` at a given step and stage.
pub trait CoefficientSource {
    fn coefficients(
        &self,
        step: usize,
        stage: usize,
        t: f64,
    ) -> Result<Cow<'_, ReformState>, SolveError>;
}

/// Time-independent coefficients.
#[derive(Debug, Clone)]
pub struct Frozen(pub ReformState);

impl CoefficientSource for Frozen {
    fn coefficients(&self, _: usize, _: usize, _: f64) -> Result<Cow<'_, ReformState>, SolveError> {
        Ok(Cow::Borrowed(&self.0))
    }
}

/// Coefficients given as a closed form in time.
pub struct Analytic<F: Fn(f64) -> ReformState>(pub F);

impl<F: Fn(f64) -> ReformState> CoefficientSource for Analytic<F> {
    fn coefficients(&self, _: usize, _: usize, t: f64) -> Result<Cow<'_, ReformState>, SolveError> {
        Ok(Cow::Owned((self.0)(t)))
    }
}

/// Stage values recorded by an earlier solve on the same time grid.
impl CoefficientSource for Trajectory {
    fn coefficients(
        &self,
        step: usize,
        stage: usize,
        _: f64,
    ) -> Result<Cow<'_, ReformState>, SolveError> {
        self.stages
            .get(step)
            .map(|s| Cow::Borrowed(&s[stage]))
            .ok_or(SolveError::MissingStages(step))
    }
}

/// Additive right-hand sides, as rates of `(ϕ, φ, u)` bundled in a state.
pub trait Forcing {
    fn rates(&self, t: f64) -> ReformState;
}

impl<F: Fn(f64) -> ReformState> Forcing for F {
    fn rates(&self, t: f64) -> ReformState {
        self(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepPolicy {
    /// `dt` recomputed each step from the current coefficients.
    Adaptive,
    /// Fixed step; the last step is shortened to land on the window end.
    Uniform { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub cfl_safety: f64,
    /// Clip negative `ϕ, φ` after each step.
    pub clip: bool,
    /// Abort when `min(α+βϕ^{2m}) < α/2`.
    pub enforce_validity: bool,
    /// Store per-step stage values (needed when the result feeds a later solve).
    pub record_stages: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            cfl_safety: 0.4,
            clip: true,
            enforce_validity: true,
            record_stages: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem<'a> {
    pub params: &'a FluidParams,
    pub eta: f64,
    pub t_end: f64,
    pub policy: StepPolicy,
    /// Sampling interval; `None` keeps every step.
    pub cadence: Option<f64>,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub courant: f64,
    pub nu_bar: f64,
    pub clip_events: usize,
    /// Density mass removed by clipping this step.
    pub clipped_mass: f64,
    pub coeff_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sampled states; the first is the initial condition, the last the end state.
    pub samples: Vec<ReformState>,
    pub steps: Vec<StepRecord>,
    /// Stage values `[Y1, Y2, Y3]` of every step, when recorded.
    pub stages: Vec<[ReformState; 3]>,
}

impl Trajectory {
    pub fn initial(&self) -> &ReformState {
        &self.samples[0]
    }

    pub fn last(&self) -> &ReformState {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn dt_history(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.dt).collect()
    }
}

/// Uniform step count for a window: `dt = T / ceil(T/dt0)`.
pub fn uniform_dt(t_end: f64, dt0: f64) -> f64 {
    let n = (t_end / dt0 - 1e-9).ceil().max(1.0);
    t_end / n
}

/// Characteristic speed `max|v| + sqrt(Aγ) max φ̃`.
pub fn wave_speed(params: &FluidParams, coeffs: &ReformState) -> f64 {
    coeffs.u.max_abs() + params.sound_speed_factor() * coeffs.phi.max_abs()
}

pub fn cfl_dt(params: &FluidParams, coeffs: &ReformState, cfl_safety: f64) -> f64 {
    cfl_safety * coeffs.grid().spacing() / (wave_speed(params, coeffs) + 1e-12)
}

fn filtered(f: &ScalarField) -> ScalarField {
    f.dealiased()
}

/// `exp(τ ν̄ (Δ + ∇div))` applied to `u`: transverse modes decay with
/// `ν̄|k|²`, longitudinal modes with `2ν̄|k|²`.
pub fn viscous_propagator(u: &VectorField, tau_nu: f64) -> VectorField {
    if tau_nu == 0.0 {
        return u.clone();
    }
    let dim = u.dim();
    let specs: Vec<Spectrum> = u.components().iter().map(ScalarField::spectrum).collect();
    let grid = *u.grid();
    let len = grid.len();
    let mut out: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); len]; dim];
    for i in 0..len {
        let (k, _) = specs[0].wavevector(i);
        let k2: f64 = k[..dim].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            for c in 0..dim {
                out[c][i] = specs[c].coeffs()[i];
            }
            continue;
        }
        let et = (-tau_nu * k2).exp();
        let el = (-2.0 * tau_nu * k2).exp();
        let kdotu: Complex64 = (0..dim).map(|c| specs[c].coeffs()[i] * k[c]).sum();
        for c in 0..dim {
            let long = kdotu * (k[c] / k2);
            let trans = specs[c].coeffs()[i] - long;
            out[c][i] = trans * et + long * el;
        }
    }
    let comps = out
        .into_iter()
        .map(|coeffs| Spectrum::from_coeffs(&grid, coeffs).to_field())
        .collect();
    VectorField::from_components(comps).expect("dim components")
}

/// Stage values and end value of one scalar Heun step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarStep {
    pub stages: [ScalarField; 3],
    pub next: ScalarField,
}

fn heun3(
    y: &ScalarField,
    dt: f64,
    mut rate: impl FnMut(usize, &ScalarField) -> ScalarField,
) -> ScalarStep {
    let n1 = rate(0, y);
    let mut y2 = y.clone();
    y2.axpy(dt / 3.0, &n1);
    let n2 = rate(1, &y2);
    let mut y3 = y.clone();
    y3.axpy(2.0 * dt / 3.0, &n2);
    let n3 = rate(2, &y3);
    let mut next = y.clone();
    next.axpy(0.25 * dt, &n1);
    next.axpy(0.75 * dt, &n3);
    ScalarStep {
        stages: [y.clone(), y2, y3],
        next,
    }
}

/// One step of `ϕ_t + v·∇ϕ + (δ1−1)/2 ϕ̃ div v = f`, coefficients given per stage.
pub fn transport_step(
    params: &FluidParams,
    vphi: &ScalarField,
    coeffs: [&ReformState; 3],
    forcing: Option<[&ScalarField; 3]>,
    dt: f64,
) -> ScalarStep {
    heun3(vphi, dt, |s, y| {
        let mut r = filtered(&transport_rate(params, y, &coeffs[s].u, &coeffs[s].vphi));
        if let Some(f) = forcing {
            r.axpy(1.0, f[s]);
        }
        r
    })
}

/// Stage values and end value of one `(φ, u)` step.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumStep {
    pub phi: [ScalarField; 3],
    pub u: [VectorField; 3],
    pub next_phi: ScalarField,
    pub next_u: VectorField,
    pub nu_bar: f64,
}

/// `ν̄ = max (ϕ²+η²) max(α, α+βϕ^{2m})` over the given fields.
pub fn nu_bar(params: &FluidParams, vphis: &[&ScalarField], eta: f64) -> f64 {
    let mut nu: f64 = 0.0;
    for f in vphis {
        for &p in f.data() {
            let s = pow_nonneg(p, 2.0 * params.m);
            let c = params.alpha.max(params.bulk_coefficient(s));
            nu = nu.max((p * p + eta * eta) * c);
        }
    }
    nu
}

/// Forcing for the `(φ, u)` system at one stage.
pub type MomentumForcing<'a> = (&'a ScalarField, &'a VectorField);

/// One step of the linear `(φ, u)` system; `vphi_stages` are the new-level
/// `ϕ` values at the three stage times.
pub fn momentum_step(
    params: &FluidParams,
    phi: &ScalarField,
    u: &VectorField,
    coeffs: [&ReformState; 3],
    vphi_stages: [&ScalarField; 3],
    eta: f64,
    forcing: Option<[MomentumForcing<'_>; 3]>,
    dt: f64,
) -> Result<MomentumStep, SolveError> {
    let nu = nu_bar(params, &vphi_stages, eta);
    let grid = *phi.grid();
    let rates = |s: usize,
                 phi_s: &ScalarField,
                 u_s: &VectorField|
     -> Result<(ScalarField, VectorField), SolveError> {
        let w = ReformState {
            vphi: ScalarField::zeros(&grid),
            phi: phi_s.clone(),
            u: u_s.clone(),
            time: 0.0,
        };
        let (rp, ru) = symmetric_rates(params, coeffs[s], &w, vphi_stages[s], eta)?;
        let mut rp = filtered(&rp);
        let mut ru = ru.dealiased();
        ru.axpy(-nu, &u_s.laplacian().add(&u_s.grad_div()));
        if let Some(f) = forcing {
            rp.axpy(1.0, f[s].0);
            ru.axpy(1.0, f[s].1);
        }
        Ok((rp, ru))
    };
    let e = |u: &VectorField, frac: f64| viscous_propagator(u, frac * dt * nu);

    let (np1, nu1) = rates(0, phi, u)?;
    let mut phi2 = phi.clone();
    phi2.axpy(dt / 3.0, &np1);
    let mut tmp = u.clone();
    tmp.axpy(dt / 3.0, &nu1);
    let u2 = e(&tmp, 1.0 / 3.0);

    let (np2, nu2) = rates(1, &phi2, &u2)?;
    let mut phi3 = phi.clone();
    phi3.axpy(2.0 * dt / 3.0, &np2);
    let mut u3 = e(u, 2.0 / 3.0);
    u3.axpy(2.0 * dt / 3.0, &e(&nu2, 1.0 / 3.0));

    let (np3, nu3) = rates(2, &phi3, &u3)?;
    let mut next_phi = phi.clone();
    next_phi.axpy(0.25 * dt, &np1);
    next_phi.axpy(0.75 * dt, &np3);
    let mut acc = u.clone();
    acc.axpy(0.25 * dt, &nu1);
    let mut next_u = e(&acc, 1.0);
    next_u.axpy(0.75 * dt, &e(&nu3, 1.0 / 3.0));

    Ok(MomentumStep {
        phi: [phi.clone(), phi2, phi3],
        u: [u.clone(), u2, u3],
        next_phi,
        next_u,
        nu_bar: nu,
    })
}

/// Zero the negative values; returns the event count and the density mass
/// `Σ |v|^exponent dv` removed.
fn clip(f: &mut ScalarField, exponent: f64) -> (usize, f64) {
    let dv = f.grid().cell_volume();
    let mut events = 0;
    let mut mass = 0.0;
    for v in f.data_mut() {
        if *v < 0.0 {
            if *v < -CLIP_TOL {
                events += 1;
                mass += pow_nonneg(-*v, exponent) * dv;
            }
            *v = 0.0;
        }
    }
    (events, mass)
}

fn min_bulk(params: &FluidParams, f: &ScalarField) -> f64 {
    f.data()
        .iter()
        .map(|&p| params.bulk_coefficient(pow_nonneg(p, 2.0 * params.m)))
        .fold(f64::INFINITY, f64::min)
}

/// Solve the linearized problem from `init` to `t_end`.
pub fn solve_linearized(
    problem: &LinearProblem<'_>,
    init: &ReformState,
    coeffs: &dyn CoefficientSource,
    forcing: Option<&dyn Forcing>,
) -> Result<Trajectory, SolveError> {
    let params = problem.params;
    if !(problem.t_end > 0.0 && problem.t_end.is_finite()) {
        return Err(SolveError::Window(format!("t_end = {}", problem.t_end)));
    }
    if !(0.0..=1.0).contains(&problem.eta) {
        return Err(SolveError::Window(format!(
            "eta = {} outside [0, 1]",
            problem.eta
        )));
    }
    let grid: Grid = *init.grid();
    let h = grid.spacing();
    let t0 = init.time;
    let t_final = t0 + problem.t_end;
    let mut state = init.clone();
    let mut traj = Trajectory {
        samples: vec![init.clone()],
        steps: Vec::new(),
        stages: Vec::new(),
    };
    let mut next_sample = problem.cadence.map(|c| t0 + c);
    let mut step = 0usize;
    while state.time < t_final - 1e-12 * problem.t_end {
        let t = state.time;
        let c0 = coeffs.coefficients(step, 0, t)?;
        let speed = wave_speed(params, &c0);
        let mut dt = match problem.policy {
            StepPolicy::Adaptive => problem.settings.cfl_safety * h / (speed + 1e-12),
            StepPolicy::Uniform { dt } => dt,
        };
        if t + dt > t_final - 1e-9 * dt {
            dt = t_final - t;
        }
        let courant = dt * speed / h;
        if courant > CFL_LIMIT {
            return Err(SolveError::Cfl {
                time: t,
                courant,
                limit: CFL_LIMIT,
            });
        }
        let c1 = coeffs.coefficients(step, 1, t + NODES[1] * dt)?;
        let c2 = coeffs.coefficients(step, 2, t + NODES[2] * dt)?;
        let cs = [c0.as_ref(), c1.as_ref(), c2.as_ref()];
        let f: Option<[ReformState; 3]> = forcing.map(|f| NODES.map(|c| f.rates(t + c * dt)));

        let tr = transport_step(
            params,
            &state.vphi,
            cs,
            f.as_ref().map(|f| [&f[0].vphi, &f[1].vphi, &f[2].vphi]),
            dt,
        );
        let coeff_min = [&tr.stages[0], &tr.stages[1], &tr.stages[2], &tr.next]
            .iter()
            .map(|v| min_bulk(params, v))
            .fold(f64::INFINITY, f64::min);
        if problem.settings.enforce_validity && coeff_min < 0.5 * params.alpha {
            return Err(SolveError::Validity { time: t, coeff_min });
        }
        let mom = momentum_step(
            params,
            &state.phi,
            &state.u,
            cs,
            [&tr.stages[0], &tr.stages[1], &tr.stages[2]],
            problem.eta,
            f.as_ref().map(|f| {
                [
                    (&f[0].phi, &f[0].u),
                    (&f[1].phi, &f[1].u),
                    (&f[2].phi, &f[2].u),
                ]
            }),
            dt,
        )?;

        let mut vphi = tr.next;
        let mut phi = mom.next_phi;
        let (mut events, mut mass) = (0, 0.0);
        if problem.settings.clip {
            let (e1, m1) = clip(&mut vphi, params.density_exponent_vphi());
            let (e2, m2) = clip(&mut phi, params.density_exponent_phi());
            events = e1 + e2;
            mass = m1 + m2;
        }
        let t_new = if dt == t_final - t { t_final } else { t + dt };
        let new_state = ReformState {
            vphi,
            phi,
            u: mom.next_u,
            time: t_new,
        };
        if !new_state.is_finite() {
            return Err(SolveError::NonFinite { time: t });
        }
        if problem.settings.record_stages {
            let [s0, s1, s2] = tr.stages;
            let [p0, p1, p2] = mom.phi;
            let [u0, u1, u2] = mom.u;
            traj.stages.push([
                ReformState {
                    vphi: s0,
                    phi: p0,
                    u: u0,
                    time: t,
                },
                ReformState {
                    vphi: s1,
                    phi: p1,
                    u: u1,
                    time: t + NODES[1] * dt,
                },
                ReformState {
                    vphi: s2,
                    phi: p2,
                    u: u2,
                    time: t + NODES[2] * dt,
                },
            ]);
        }
        traj.steps.push(StepRecord {
            t,
            dt,
            courant,
            nu_bar: mom.nu_bar,
            clip_events: events,
            clipped_mass: mass,
            coeff_min,
        });
        state = new_state;
        step += 1;
        let done = state.time >= t_final - 1e-12 * problem.t_end;
        let take = match next_sample.as_mut() {
            None => true,
            Some(ns) => {
                if state.time >= *ns - 1e-9 * dt {
                    while *ns <= state.time + 1e-9 * dt {
                        *ns += problem.cadence.unwrap_or(0.0);
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
    Ok(traj)
}
