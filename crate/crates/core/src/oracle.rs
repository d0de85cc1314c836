//! Independent checks: an explicit primitive-variable solver of the original
//! equations, manufactured solutions for both solvers, and observed orders.
//!
//! Manufactured forcing is `∂_t W* − P F(W*)` with `P F` the solver's own
//! filtered spatial operator applied to the sampled closed form, so a
//! band-limited case carries no spatial error and the measured error is the
//! time-integration error alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{l2_norm, FieldError, Grid, ScalarField, VectorField};
use crate::fixedpoint::{picard_solve, PicardProblem, PicardSettings, PicardTrace};
use crate::linearized::{
    solve_linearized, uniform_dt, Analytic, Forcing, LinearProblem, SolveError, SolverSettings,
    StepPolicy,
};
use crate::operators::{pow_nonneg, symmetric_rates, transport_rate, ReformState};
use crate::params::FluidParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle requires min ρ>0 (found {0:.3e})")]
    NonPositiveDensity(f64),
    #[error("time step underflow at t = {0}")]
    DtUnderflow(f64),
    #[error("non-finite value at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("reform solver: {0}")]
    Reform(#[from] SolveError),
    #[error("reform Picard iteration did not converge (S = {0:.3e})")]
    NotConverged(f64),
    #[error("{0}")]
    Input(String),
}

/// `amp · sin(2π/L k·x + phase + ω t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub amp: f64,
    pub k: [i32; 3],
    pub phase: f64,
    pub omega: f64,
}

impl TrigMode {
    fn arg(&self, x: &[f64], t: f64, l: f64) -> f64 {
        let k0 = 2.0 * std::f64::consts::PI / l;
        let kx: f64 = x.iter().zip(&self.k).map(|(a, &k)| k0 * k as f64 * a).sum();
        kx + self.phase + self.omega * t
    }
}

/// `mean + Σ modes`, band-limited in space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub mean: f64,
    pub modes: Vec<TrigMode>,
}

impl TrigSeries {
    pub fn constant(mean: f64) -> Self {
        TrigSeries {
            mean,
            modes: Vec::new(),
        }
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> ScalarField {
        let l = grid.box_length();
        ScalarField::from_fn(grid, |x| {
            self.mean
                + self
                    .modes
                    .iter()
                    .map(|m| m.amp * m.arg(x, t, l).sin())
                    .sum::<f64>()
        })
    }

    pub fn sample_dt(&self, grid: &Grid, t: f64) -> ScalarField {
        let l = grid.box_length();
        ScalarField::from_fn(grid, |x| {
            self.modes
                .iter()
                .map(|m| m.amp * m.omega * m.arg(x, t, l).cos())
                .sum::<f64>()
        })
    }

    /// Lower bound `mean − Σ|amp|`.
    pub fn lower_bound(&self) -> f64 {
        self.mean - self.modes.iter().map(|m| m.amp.abs()).sum::<f64>()
    }
}

fn sample_vector(series: &[TrigSeries], grid: &Grid, t: f64, dt: bool) -> VectorField {
    let comps = series
        .iter()
        .map(|s| {
            if dt {
                s.sample_dt(grid, t)
            } else {
                s.sample(grid, t)
            }
        })
        .collect();
    VectorField::from_components(comps).expect("one series per component")
}

/// Closed-form primitive fields `(ρ*, u*)` with a positive density floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub rho: TrigSeries,
    pub u: Vec<TrigSeries>,
}

impl ManufacturedCase {
    pub fn validate(&self, grid: &Grid) -> Result<(), OracleError> {
        if self.u.len() != grid.dim() {
            return Err(OracleError::Input(format!(
                "{} velocity series for dimension {}",
                self.u.len(),
                grid.dim()
            )));
        }
        let floor = self.rho.lower_bound();
        if floor <= 0.0 {
            return Err(OracleError::NonPositiveDensity(floor));
        }
        Ok(())
    }

    pub fn rho(&self, grid: &Grid, t: f64) -> ScalarField {
        self.rho.sample(grid, t)
    }

    pub fn velocity(&self, grid: &Grid, t: f64) -> VectorField {
        sample_vector(&self.u, grid, t, false)
    }

    /// `(ρ*, m* = ρ*u*)` and their time derivatives.
    fn conserved(
        &self,
        grid: &Grid,
        t: f64,
    ) -> (ScalarField, VectorField, ScalarField, VectorField) {
        let rho = self.rho.sample(grid, t);
        let rho_t = self.rho.sample_dt(grid, t);
        let u = sample_vector(&self.u, grid, t, false);
        let u_t = sample_vector(&self.u, grid, t, true);
        let m = u.mul_scalar(&rho);
        let m_t = u_t.mul_scalar(&rho).add(&u.mul_scalar(&rho_t));
        (rho, m, rho_t, m_t)
    }

    /// Forcing of the primitive solver that makes the sampled case exact.
    pub fn primitive_forcing(
        &self,
        params: &FluidParams,
        grid: &Grid,
        t: f64,
    ) -> (ScalarField, VectorField) {
        let (rho, m, rho_t, m_t) = self.conserved(grid, t);
        let (fr, fm) = primitive_rhs(params, &rho, &m);
        (rho_t.sub(&fr), m_t.sub(&fm))
    }
}

/// Closed-form reformulated fields `(ϕ*, φ*, u*)`, not tied to one density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformCase {
    pub vphi: TrigSeries,
    pub phi: TrigSeries,
    pub u: Vec<TrigSeries>,
}

impl ReformCase {
    pub fn state(&self, grid: &Grid, t: f64) -> ReformState {
        ReformState {
            vphi: self.vphi.sample(grid, t),
            phi: self.phi.sample(grid, t),
            u: sample_vector(&self.u, grid, t, false),
            time: t,
        }
    }

    pub fn rates(&self, grid: &Grid, t: f64) -> ReformState {
        ReformState {
            vphi: self.vphi.sample_dt(grid, t),
            phi: self.phi.sample_dt(grid, t),
            u: sample_vector(&self.u, grid, t, true),
            time: t,
        }
    }

    /// `∂_t W* − P F(W*)`, with coefficients and viscosity taken from `W*`.
    pub fn forcing(&self, params: &FluidParams, grid: &Grid, eta: f64, t: f64) -> ReformState {
        let w = self.state(grid, t);
        let mut f = self.rates(grid, t);
        let rv = transport_rate(params, &w.vphi, &w.u, &w.vphi).dealiased();
        let (rp, ru) = symmetric_rates(params, &w, &w, &w.vphi, eta).expect("shared grid");
        f.vphi.axpy(-1.0, &rv);
        f.phi.axpy(-1.0, &rp.dealiased());
        f.u.axpy(-1.0, &ru.dealiased());
        f
    }
}

/// Filtered right side `(ρ_t, m_t)` of the primitive equations in
/// conservative variables.
pub fn primitive_rhs(
    params: &FluidParams,
    rho: &ScalarField,
    m: &VectorField,
) -> (ScalarField, VectorField) {
    let dim = rho.grid().dim();
    let u = m.map_components(|c| c.zip_map(rho, |a, r| a / r));
    let mu = rho.map(|r| params.alpha * pow_nonneg(r, params.delta1));
    let lambda = rho.map(|r| params.beta * pow_nonneg(r, params.delta2));
    let pressure = rho.map(|r| params.a * pow_nonneg(r, params.gamma));
    let jac = u.jacobian();
    let div_u = u.divergence();
    let bulk = lambda.mul(&div_u);
    let mut comps = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut r = ScalarField::zeros(rho.grid());
        for j in 0..dim {
            let mut ord = vec![0usize; dim];
            ord[j] = 1;
            let flux = m
                .component(c)
                .mul(u.component(j))
                .sub(&mu.mul(&jac[c][j].add(&jac[j][c])));
            r.axpy(-1.0, &flux.derivative(&ord).expect("first order"));
        }
        let mut ord = vec![0usize; dim];
        ord[c] = 1;
        r.axpy(
            -1.0,
            &pressure.sub(&bulk).derivative(&ord).expect("first order"),
        );
        comps.push(r.dealiased());
    }
    let rho_t = m.divergence().scaled(-1.0).dealiased();
    (
        rho_t,
        VectorField::from_components(comps).expect("dim components"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSample {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveTrajectory {
    pub samples: Vec<PrimitiveSample>,
    pub steps: usize,
}

impl PrimitiveTrajectory {
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.samples[0].rho.integral();
        self.samples
            .iter()
            .map(|s| (s.rho.integral() - m0).abs())
            .fold(0.0, f64::max)
            / m0.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub cfl_safety: f64,
    /// Fixed step; otherwise the smaller of the acoustic and viscous limits.
    pub dt: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            cfl_safety: 0.4,
            dt: None,
        }
    }
}

/// Step limit from the acoustic speed and the explicit viscous bound of RK4.
pub fn oracle_dt(params: &FluidParams, rho: &ScalarField, u: &VectorField, cfl: f64) -> f64 {
    let h = rho.grid().spacing();
    let c = rho
        .data()
        .iter()
        .map(|&r| (params.a * params.gamma * pow_nonneg(r, params.gamma - 1.0)).sqrt())
        .fold(0.0, f64::max);
    let speed = u.max_abs() + c + 1e-12;
    let nu = rho
        .data()
        .iter()
        .map(|&r| {
            (2.0 * params.alpha * pow_nonneg(r, params.delta1)
                + (params.beta * pow_nonneg(r, params.delta2)).max(0.0))
                / r
        })
        .fold(0.0, f64::max);
    let kmax = 2.0 * std::f64::consts::PI / (3.0 * h);
    let dim = rho.grid().dim() as f64;
    let visc = 2.5 / (nu * kmax * kmax * dim + 1e-300);
    (cfl * h / speed).min(cfl * visc)
}

/// Primitive forcing at time `t`, as used by [`primitive_solve`].
pub type PrimitiveForcing<'a> = &'a dyn Fn(f64) -> (ScalarField, VectorField);

/// RK4 solve of the primitive equations; outputs at the requested times
/// (which must be increasing and positive; the last one is the end time).
pub fn primitive_solve(
    params: &FluidParams,
    rho0: &ScalarField,
    u0: &VectorField,
    output_times: &[f64],
    settings: OracleSettings,
    forcing: Option<PrimitiveForcing<'_>>,
) -> Result<PrimitiveTrajectory, OracleError> {
    let floor = rho0.min();
    if floor <= 0.0 {
        return Err(OracleError::NonPositiveDensity(floor));
    }
    if output_times.windows(2).any(|w| w[1] <= w[0])
        || output_times.first().is_some_and(|&t| t <= 0.0)
    {
        return Err(OracleError::Input(
            "output times must be positive and increasing".into(),
        ));
    }
    let rhs = |t: f64, rho: &ScalarField, m: &VectorField| {
        let (mut a, mut b) = primitive_rhs(params, rho, m);
        if let Some(f) = forcing {
            let (fr, fm) = f(t);
            a.axpy(1.0, &fr);
            b.axpy(1.0, &fm);
        }
        (a, b)
    };
    let mut rho = rho0.clone();
    let mut m = u0.mul_scalar(rho0);
    let mut t = 0.0;
    let mut samples = vec![PrimitiveSample {
        t: 0.0,
        rho: rho0.clone(),
        u: u0.clone(),
    }];
    let mut steps = 0;
    for &target in output_times {
        while t < target - 1e-12 * target {
            let u = m.map_components(|c| c.zip_map(&rho, |a, r| a / r));
            let mut dt = settings
                .dt
                .unwrap_or_else(|| oracle_dt(params, &rho, &u, settings.cfl_safety));
            if dt < 1e-14 * target.max(1.0) {
                return Err(OracleError::DtUnderflow(t));
            }
            if t + dt > target - 1e-9 * dt {
                dt = target - t;
            }
            let (k1r, k1m) = rhs(t, &rho, &m);
            let stage = |c: f64, kr: &ScalarField, km: &VectorField| {
                let mut r = rho.clone();
                r.axpy(c * dt, kr);
                let mut mm = m.clone();
                mm.axpy(c * dt, km);
                (r, mm)
            };
            let (r2, m2) = stage(0.5, &k1r, &k1m);
            let (k2r, k2m) = rhs(t + 0.5 * dt, &r2, &m2);
            let (r3, m3) = stage(0.5, &k2r, &k2m);
            let (k3r, k3m) = rhs(t + 0.5 * dt, &r3, &m3);
            let (r4, m4) = stage(1.0, &k3r, &k3m);
            let (k4r, k4m) = rhs(t + dt, &r4, &m4);
            for (kr, km, w) in [
                (&k1r, &k1m, 1.0),
                (&k2r, &k2m, 2.0),
                (&k3r, &k3m, 2.0),
                (&k4r, &k4m, 1.0),
            ] {
                rho.axpy(dt * w / 6.0, kr);
                m.axpy(dt * w / 6.0, km);
            }
            t = if dt == target - t { target } else { t + dt };
            steps += 1;
            if !(rho.is_finite() && m.is_finite()) {
                return Err(OracleError::NonFinite(t));
            }
            if rho.min() <= 0.0 {
                return Err(OracleError::NonPositiveDensity(rho.min()));
            }
        }
        let u = m.map_components(|c| c.zip_map(&rho, |a, r| a / r));
        samples.push(PrimitiveSample {
            t,
            rho: rho.clone(),
            u,
        });
    }
    Ok(PrimitiveTrajectory { samples, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCompare {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub sup_distance: f64,
    pub reform_trace: PicardTrace,
    pub reform_mass_drift: f64,
    pub oracle_mass_drift: f64,
}

/// L² distance between primitive pairs.
pub fn primitive_distance(
    rho_a: &ScalarField,
    u_a: &VectorField,
    rho_b: &ScalarField,
    u_b: &VectorField,
) -> f64 {
    let mut s = l2_norm(&rho_a.sub(rho_b)).powi(2);
    for (a, b) in u_a.components().iter().zip(u_b.components()) {
        s += l2_norm(&a.sub(b)).powi(2);
    }
    s.sqrt()
}

/// Run the Picard pipeline (at `eta`) and the primitive solver from the same
/// data and compare the reconstructed density and velocity at every reform
/// sample time.
pub fn cross_compare(
    params: &FluidParams,
    rho0: &ScalarField,
    u0: &VectorField,
    t_end: f64,
    eta: f64,
    picard: PicardSettings,
    oracle: OracleSettings,
) -> Result<CrossCompare, OracleError> {
    let floor = rho0.min();
    if floor <= 0.0 {
        return Err(OracleError::NonPositiveDensity(floor));
    }
    let init = ReformState::from_density(params, rho0, u0.clone(), 0.0);
    let problem = PicardProblem {
        params,
        eta,
        t_end,
        settings: picard,
        forcing: None,
    };
    let (traj, trace) = picard_solve(&problem, &init)?;
    if !trace.converged {
        return Err(OracleError::NotConverged(trace.final_s()));
    }
    let times: Vec<f64> = traj.samples.iter().skip(1).map(|s| s.time).collect();
    let prim = primitive_solve(params, rho0, u0, &times, oracle, None)?;
    let mut distance = Vec::with_capacity(traj.samples.len());
    for (s, p) in traj.samples.iter().zip(&prim.samples) {
        distance.push(primitive_distance(&s.density(params), &s.u, &p.rho, &p.u));
    }
    let reform_mass = crate::diagnostics::conservation(&traj, params).max_mass_drift;
    Ok(CrossCompare {
        times: traj.times(),
        sup_distance: distance.iter().copied().fold(0.0, f64::max),
        distance,
        reform_trace: trace,
        reform_mass_drift: reform_mass,
        oracle_mass_drift: prim.mass_drift(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderFlag {
    Ok,
    /// `e_N = e_2N`: order defined as 0.
    Identical,
    /// `e_2N > e_N`.
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub flags: Vec<OrderFlag>,
}

impl OrderReport {
    pub fn all_ok(&self) -> bool {
        self.flags.iter().all(|f| *f == OrderFlag::Ok)
    }
}

/// Observed orders `log2(e_j / e_{j+1})` for successive halvings.
pub fn mms_orders(errors: &[f64]) -> Result<OrderReport, OracleError> {
    if errors.len() < 3 {
        return Err(OracleError::Input(format!(
            "need at least 3 levels, got {}",
            errors.len()
        )));
    }
    let mut orders = Vec::new();
    let mut flags = Vec::new();
    for w in errors.windows(2) {
        if w[0] == w[1] {
            orders.push(0.0);
            flags.push(OrderFlag::Identical);
        } else {
            orders.push((w[0] / w[1]).log2());
            flags.push(if w[1] > w[0] {
                OrderFlag::NonMonotone
            } else {
                OrderFlag::Ok
            });
        }
    }
    Ok(OrderReport {
        errors: errors.to_vec(),
        orders,
        flags,
    })
}

fn state_error(a: &ReformState, b: &ReformState) -> f64 {
    let (x, y, z) = a.sq_distance(b);
    (x + y + z).sqrt()
}

/// Final-time L² error of the primitive solver on a manufactured case.
pub fn primitive_mms_error(
    params: &FluidParams,
    case: &ManufacturedCase,
    grid: &Grid,
    dt: f64,
    t_end: f64,
) -> Result<f64, OracleError> {
    case.validate(grid)?;
    let forcing = |t: f64| case.primitive_forcing(params, grid, t);
    let dt = uniform_dt(t_end, dt);
    let traj = primitive_solve(
        params,
        &case.rho(grid, 0.0),
        &case.velocity(grid, 0.0),
        &[t_end],
        OracleSettings {
            cfl_safety: 0.4,
            dt: Some(dt),
        },
        Some(&forcing),
    )?;
    let last = traj.samples.last().expect("end sample");
    Ok(primitive_distance(
        &last.rho,
        &last.u,
        &case.rho(grid, t_end),
        &case.velocity(grid, t_end),
    ))
}

/// How the reform solver is driven in a manufactured study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReformMode {
    /// One linearized solve with the exact solution as coefficients.
    Linearized,
    /// Full Picard iteration with the given settings.
    Picard(PicardSettings),
}

/// Final-time L² error of the reform solver on a manufactured case.
pub fn reform_mms_error(
    params: &FluidParams,
    case: &ReformCase,
    grid: &Grid,
    dt: f64,
    t_end: f64,
    eta: f64,
    mode: ReformMode,
) -> Result<f64, OracleError> {
    let init = case.state(grid, 0.0);
    let forcing = |t: f64| case.forcing(params, grid, eta, t);
    let exact = case.state(grid, t_end);
    let settings = SolverSettings {
        clip: false,
        record_stages: false,
        ..SolverSettings::default()
    };
    let last = match mode {
        ReformMode::Linearized => {
            let problem = LinearProblem {
                params,
                eta,
                t_end,
                policy: StepPolicy::Uniform {
                    dt: uniform_dt(t_end, dt),
                },
                cadence: Some(t_end),
                settings,
            };
            let coeffs = Analytic(|t: f64| case.state(grid, t));
            let traj = solve_linearized(&problem, &init, &coeffs, Some(&forcing as &dyn Forcing))?;
            traj.last().clone()
        }
        ReformMode::Picard(p) => {
            let problem = PicardProblem {
                params,
                eta,
                t_end,
                settings: PicardSettings {
                    dt: Some(dt),
                    cadence: Some(t_end),
                    solver: SolverSettings {
                        clip: false,
                        ..p.solver
                    },
                    ..p
                },
                forcing: Some(&forcing),
            };
            let (traj, trace) = picard_solve(&problem, &init)?;
            if !trace.converged {
                return Err(OracleError::NotConverged(trace.final_s()));
            }
            traj.last().clone()
        }
    };
    Ok(state_error(&last, &exact))
}
