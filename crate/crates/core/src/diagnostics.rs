//! Post-processing of trajectories: the a priori ledger and horizons,
//! validity verdicts, the vacuum clause, conservation, reconstruction of the
//! primitive variables, density along characteristics and equation residuals.
//!
//! Time derivatives are taken from stored samples with three-point
//! differences, independent of the solver's own right-hand side.

use serde::{Deserialize, Serialize};

use crate::fields::{
    l2_norm, seminorm, sobolev_norm, vector_seminorm, vector_sobolev_norm, weighted_seminorm,
    ScalarField, Spectrum, VectorField,
};
use crate::linearized::{Forcing, Trajectory};
use crate::operators::{pow_field, pow_nonneg, symmetric_rates, transport_rate, ReformState};
use crate::params::FluidParams;

pub const VAC_EPS: f64 = 1e-10;
/// Density below this fraction of the peak counts as vacuum for the support guard.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// Three-point derivative weights at `t[i]` over `(t[a], t[b], t[c])`.
fn fd_weights(t: [f64; 3], at: f64) -> [f64; 3] {
    let [t0, t1, t2] = t;
    [
        ((at - t1) + (at - t2)) / ((t0 - t1) * (t0 - t2)),
        ((at - t0) + (at - t2)) / ((t1 - t0) * (t1 - t2)),
        ((at - t0) + (at - t1)) / ((t2 - t0) * (t2 - t1)),
    ]
}

/// Sample indices and weights for the time derivative at sample `i`;
/// `None` with fewer than three samples.
fn fd_stencil(times: &[f64], i: usize) -> Option<([usize; 3], [f64; 3])> {
    if times.len() < 3 {
        return None;
    }
    let c = i.clamp(1, times.len() - 2);
    let idx = [c - 1, c, c + 1];
    Some((idx, fd_weights(idx.map(|j| times[j]), times[i])))
}

fn combine_scalar(fields: [&ScalarField; 3], w: [f64; 3]) -> ScalarField {
    let mut out = fields[0].scaled(w[0]);
    out.axpy(w[1], fields[1]);
    out.axpy(w[2], fields[2]);
    out
}

/// Finite-difference time derivative of every unknown at sample `i`.
pub fn time_derivative(traj: &Trajectory, i: usize) -> Option<ReformState> {
    let times = traj.times();
    let (idx, w) = fd_stencil(&times, i)?;
    let s = idx.map(|j| &traj.samples[j]);
    let comps = (0..s[0].u.dim())
        .map(|c| {
            combine_scalar(
                [
                    s[0].u.component(c),
                    s[1].u.component(c),
                    s[2].u.component(c),
                ],
                w,
            )
        })
        .collect();
    Some(ReformState {
        vphi: combine_scalar([&s[0].vphi, &s[1].vphi, &s[2].vphi], w),
        phi: combine_scalar([&s[0].phi, &s[1].phi, &s[2].phi], w),
        u: VectorField::from_components(comps).expect("dim components"),
        time: times[i],
    })
}

/// `T** = min{T, (1+c3)^{−4m−4}}` and the intermediate horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizons {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t_star_star: f64,
}

impl Horizons {
    pub fn new(t_window: f64, c3: f64, m: f64) -> Self {
        let base = 1.0 + c3;
        let t_star_star = t_window.min(base.powf(-4.0 * m - 4.0));
        let t1 = t_star_star.min(base.powi(-2));
        let t2 = t1.min(base.powf(-4.0 * m - 2.0));
        let t3 = t2.min(base.powf(-4.0 * m - 4.0));
        Horizons {
            t1,
            t2,
            t3,
            t_star_star,
        }
    }
}

/// `c0 = 1 + ‖ϕ0‖₃ + ‖φ0‖₃ + ‖u0‖₃`.
pub fn initial_level(state: &ReformState) -> f64 {
    1.0 + sobolev_norm(&state.vphi, 3)
        + sobolev_norm(&state.phi, 3)
        + vector_sobolev_norm(&state.u, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `‖·‖_s` for `s = 1, 2, 3`.
    pub vphi_h: [f64; 3],
    pub phi_h: [f64; 3],
    pub u_h: [f64; 3],
    /// `|·|_{D^k}` for `k = 2, 3`.
    pub vphi_d: [f64; 2],
    pub phi_d: [f64; 2],
    pub u_d: [f64; 2],
    /// Running `∫|ϕ∇^k u|²` for `k = 2, 3, 4`.
    pub weighted_integrals: [f64; 3],
    /// `‖ϕ_t‖₂, ‖φ_t‖₂, ‖u_t‖₁`, when enough samples exist.
    pub time_norms: Option<[f64; 3]>,
    /// Running `∫|u_t|²_{D²}`.
    pub ut_d2_integral: Option<f64>,
    /// Left sides of the four ledger inequalities.
    pub levels: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCrossing {
    pub level: usize,
    pub t: f64,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriLedger {
    pub rows: Vec<LedgerRow>,
    pub calib_c: f64,
    pub m: f64,
    pub t_window: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub horizons: Horizons,
    /// `[c1², c2², c3², c3^{4m+4}]`.
    pub thresholds: [f64; 4],
    pub crossings: Vec<LedgerCrossing>,
}

impl AprioriLedger {
    /// First sample time at which any level exceeds its threshold.
    pub fn first_crossing(&self) -> Option<f64> {
        self.crossings.iter().map(|c| c.t).reduce(f64::min)
    }

    /// Largest ratio of a level to its threshold over the run.
    pub fn max_ratios(&self) -> [f64; 4] {
        let mut r = [0.0f64; 4];
        for row in &self.rows {
            for l in 0..4 {
                r[l] = r[l].max(row.levels[l] / self.thresholds[l]);
            }
        }
        r
    }
}

/// Ledger quantities at every sample, the constants `c0..c3` and horizons.
/// `t_window` is the final time `T` entering `T**`.
pub fn ledger(
    traj: &Trajectory,
    params: &FluidParams,
    calib_c: f64,
    t_window: f64,
) -> AprioriLedger {
    let c0 = initial_level(traj.initial());
    let c = calib_c.sqrt() * c0;
    let m = params.m;
    let thresholds = [c * c, c * c, c * c, c.powf(4.0 * m + 4.0)];
    let times = traj.times();
    let mut rows: Vec<LedgerRow> = Vec::with_capacity(traj.samples.len());
    let mut prev_w: Option<[f64; 3]> = None;
    let mut prev_ut: Option<f64> = None;
    let mut running = [0.0; 3];
    let mut running_ut = 0.0;
    let mut have_ut = true;
    for (i, s) in traj.samples.iter().enumerate() {
        let w: [f64; 3] = [2, 3, 4].map(|k| {
            weighted_seminorm(&s.vphi, &s.u, k)
                .expect("matching grids, order ≤ 4")
                .powi(2)
        });
        let derivs = time_derivative(traj, i);
        let ut_d2 = derivs.as_ref().map(|d| vector_seminorm(&d.u, 2).powi(2));
        if let Some(p) = prev_w {
            let dt = times[i] - times[i - 1];
            for k in 0..3 {
                running[k] += 0.5 * dt * (p[k] + w[k]);
            }
            match (prev_ut, ut_d2) {
                (Some(a), Some(b)) => running_ut += 0.5 * dt * (a + b),
                _ => have_ut = false,
            }
        }
        prev_w = Some(w);
        prev_ut = ut_d2;
        let vphi_h = [1, 2, 3].map(|k| sobolev_norm(&s.vphi, k));
        let phi_h = [1, 2, 3].map(|k| sobolev_norm(&s.phi, k));
        let u_h = [1, 2, 3].map(|k| vector_sobolev_norm(&s.u, k));
        let vphi_d = [2, 3].map(|k| seminorm(&s.vphi, k));
        let phi_d = [2, 3].map(|k| seminorm(&s.phi, k));
        let u_d = [2, 3].map(|k| vector_seminorm(&s.u, k));
        let time_norms = derivs.as_ref().map(|d| {
            [
                sobolev_norm(&d.vphi, 2),
                sobolev_norm(&d.phi, 2),
                vector_sobolev_norm(&d.u, 1),
            ]
        });
        let ut_integral = (derivs.is_some() && have_ut).then_some(running_ut);
        let sq = |x: f64| x * x;
        let level1 = sq(vphi_h[0]) + sq(phi_h[0]) + sq(u_h[0]) + running[0];
        let level2 = sq(vphi_d[0]) + sq(phi_d[0]) + sq(u_d[0]) + running[1];
        let level3 = sq(vphi_d[1]) + sq(phi_d[1]) + sq(u_d[1]) + running[2];
        let level4 = match (time_norms, ut_integral) {
            (Some(tn), Some(ig)) => sq(tn[2]) + sq(tn[1]) + sq(tn[0]) + ig,
            _ => 0.0,
        };
        rows.push(LedgerRow {
            t: times[i],
            vphi_h,
            phi_h,
            u_h,
            vphi_d,
            phi_d,
            u_d,
            weighted_integrals: running,
            time_norms,
            ut_d2_integral: ut_integral,
            levels: [level1, level2, level3, level4],
        });
    }
    let mut crossings = Vec::new();
    for l in 0..4 {
        if let Some(row) = rows.iter().find(|r| r.levels[l] > thresholds[l]) {
            crossings.push(LedgerCrossing {
                level: l + 1,
                t: row.t,
                value: row.levels[l],
                threshold: thresholds[l],
            });
        }
    }
    AprioriLedger {
        rows,
        calib_c,
        m,
        t_window,
        c0,
        c1: c,
        c2: c,
        c3: c,
        horizons: Horizons::new(t_window, c, m),
        thresholds,
        crossings,
    }
}

/// Whether the support of `rho` stays at least `L/8` away from the box faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub ok: bool,
    /// Largest `|x_a|` over cells with `ρ > SUPPORT_THRESHOLD · max ρ`.
    pub extent: f64,
    pub limit: f64,
}

pub fn support_check(rho: &ScalarField) -> SupportReport {
    let g = rho.grid();
    let limit = 0.5 * g.box_length() - g.box_length() / 8.0;
    let cut = SUPPORT_THRESHOLD * rho.max().max(0.0);
    let mut extent: f64 = 0.0;
    for (i, &r) in rho.data().iter().enumerate() {
        if r > cut && r > 0.0 {
            let x = g.point(i);
            for a in x.iter().take(g.dim()) {
                extent = extent.max(a.abs());
            }
        }
    }
    SupportReport {
        ok: extent <= limit + 1e-12,
        extent,
        limit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityReason {
    CoefficientBelowHalfAlpha,
    LedgerLevel1,
    LedgerLevel2,
    LedgerLevel3,
    LedgerLevel4,
    SupportMargin,
    SolverAbort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub t_valid: f64,
    pub t_end: f64,
    pub reasons: Vec<ValidityReason>,
}

/// Largest sample time up to which every validity condition holds.
pub fn validity(
    traj: &Trajectory,
    params: &FluidParams,
    ledger: &AprioriLedger,
    support_guard: bool,
) -> ValidityVerdict {
    let t_end = traj.last().time;
    let mut t_valid = traj.initial().time;
    let mut reasons = Vec::new();
    for (s, row) in traj.samples.iter().zip(&ledger.rows) {
        let coeff_min = pow_field(&s.vphi, 2.0 * params.m)
            .map(|v| params.bulk_coefficient(v))
            .min();
        if coeff_min < 0.5 * params.alpha {
            reasons.push(ValidityReason::CoefficientBelowHalfAlpha);
        }
        let level_reasons = [
            ValidityReason::LedgerLevel1,
            ValidityReason::LedgerLevel2,
            ValidityReason::LedgerLevel3,
            ValidityReason::LedgerLevel4,
        ];
        for l in 0..4 {
            if row.levels[l] > ledger.thresholds[l] {
                reasons.push(level_reasons[l]);
            }
        }
        if support_guard && !support_check(&s.density(params)).ok {
            reasons.push(ValidityReason::SupportMargin);
        }
        if !reasons.is_empty() {
            break;
        }
        t_valid = s.time;
    }
    ValidityVerdict {
        t_valid,
        t_end,
        reasons,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumResidual {
    pub max: f64,
    pub vacuum_cells: usize,
    pub no_vacuum: bool,
}

/// `max |u_t + u·∇u|` over cells with `ρ < vac_eps`, given `u_t` at the state.
pub fn vacuum_residual(
    params: &FluidParams,
    state: &ReformState,
    u_t: &VectorField,
    vac_eps: f64,
) -> VacuumResidual {
    let rho = state.density(params);
    let adv = state.u.advected_by(&state.u);
    let mut max: f64 = 0.0;
    let mut cells = 0;
    for (i, &r) in rho.data().iter().enumerate() {
        if r < vac_eps {
            cells += 1;
            let mut s = 0.0;
            for c in 0..state.u.dim() {
                let v = u_t.component(c).data()[i] + adv.component(c).data()[i];
                s += v * v;
            }
            max = max.max(s.sqrt());
        }
    }
    VacuumResidual {
        max,
        vacuum_cells: cells,
        no_vacuum: cells == 0,
    }
}

/// Vacuum residual over the interior samples of a trajectory.
pub fn trajectory_vacuum_residual(
    traj: &Trajectory,
    params: &FluidParams,
    vac_eps: f64,
) -> VacuumResidual {
    let mut out = VacuumResidual {
        max: 0.0,
        vacuum_cells: 0,
        no_vacuum: true,
    };
    let n = traj.samples.len();
    for i in 1..n.saturating_sub(1) {
        let d = time_derivative(traj, i).expect("at least three samples");
        let r = vacuum_residual(params, &traj.samples[i], &d.u, vac_eps);
        out.max = out.max.max(r.max);
        out.vacuum_cells = out.vacuum_cells.max(r.vacuum_cells);
        out.no_vacuum &= r.no_vacuum;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationSeries {
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vec<f64>>,
    pub max_mass_drift: f64,
    pub max_momentum_drift: f64,
}

fn relative_drift(series: &[f64], scale: f64) -> f64 {
    let first = series.first().copied().unwrap_or(0.0);
    let d = series.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Mass `∫ρ` and momentum `∫ρu` at every sample, with drifts relative to the
/// initial mass (momentum drift is normalized by `∫ρ|u|` at `t=0` when nonzero,
/// else by the mass).
pub fn conservation(traj: &Trajectory, params: &FluidParams) -> ConservationSeries {
    let mut t = Vec::new();
    let mut mass = Vec::new();
    let mut momentum: Vec<Vec<f64>> = Vec::new();
    for s in &traj.samples {
        let rho = s.density(params);
        t.push(s.time);
        mass.push(rho.integral());
        momentum.push(
            s.u.components()
                .iter()
                .map(|c| rho.mul(c).integral())
                .collect(),
        );
    }
    let m0 = mass[0].abs();
    let init = traj.initial();
    let mom_scale = {
        let rho = init.density(params);
        let v = rho.mul(&init.u.magnitude()).integral();
        if v > 0.0 {
            v
        } else {
            m0
        }
    };
    let dim = traj.initial().u.dim();
    let max_momentum_drift = (0..dim)
        .map(|c| {
            relative_drift(
                &momentum.iter().map(|p| p[c]).collect::<Vec<_>>(),
                mom_scale,
            )
        })
        .fold(0.0, f64::max);
    ConservationSeries {
        max_mass_drift: relative_drift(&mass, m0),
        max_momentum_drift,
        t,
        mass,
        momentum,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState {
    pub rho: ScalarField,
    pub u: VectorField,
    /// `max |ϕ^{2/(δ1−1)} − φ^{2/(γ−1)}|`.
    pub gap: f64,
}

pub fn reconstruct_primitive(state: &ReformState, params: &FluidParams) -> PrimitiveState {
    let rho = state.density(params);
    let rho_phi = pow_field(&state.phi, params.density_exponent_phi());
    PrimitiveState {
        gap: rho.sub(&rho_phi).max_abs(),
        rho,
        u: state.u.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsReport {
    pub particles: usize,
    pub dropped: usize,
    pub max_rel_error: f64,
}

fn interp_velocity(specs: &[Spectrum], x: &[f64]) -> Vec<f64> {
    specs.iter().map(|s| s.evaluate(x)).collect()
}

/// Trace particles through the sampled velocity (RK4 with linear-in-time
/// interpolation between samples) and compare the density at the particle
/// with `ρ0(x0) exp(−∫ div u)`.
pub fn characteristics_check(
    traj: &Trajectory,
    params: &FluidParams,
    n_particles: usize,
    vac_eps: f64,
) -> CharacteristicsReport {
    let init = traj.initial();
    let grid = *init.grid();
    let dim = grid.dim();
    let rho0 = init.density(params);
    let eligible: Vec<usize> = (0..grid.len())
        .filter(|&i| rho0.data()[i] > vac_eps)
        .collect();
    if eligible.is_empty() || n_particles == 0 {
        return CharacteristicsReport {
            particles: 0,
            dropped: 0,
            max_rel_error: 0.0,
        };
    }
    let stride = (eligible.len() / n_particles).max(1);
    let starts: Vec<usize> = eligible
        .iter()
        .step_by(stride)
        .take(n_particles)
        .copied()
        .collect();
    let vel: Vec<Vec<Spectrum>> = traj
        .samples
        .iter()
        .map(|s| s.u.components().iter().map(ScalarField::spectrum).collect())
        .collect();
    let divs: Vec<Spectrum> = traj
        .samples
        .iter()
        .map(|s| s.u.divergence().spectrum())
        .collect();
    let limit = 0.5 * grid.box_length() - grid.box_length() / 8.0;
    let rho_end = traj.last().density(params).spectrum();
    let mut dropped = 0;
    let mut max_err: f64 = 0.0;
    for &start in &starts {
        let p0 = grid.point(start);
        let mut x: Vec<f64> = p0[..dim].to_vec();
        let mut integral = 0.0;
        let mut lost = false;
        for n in 0..traj.samples.len() - 1 {
            let h = traj.samples[n + 1].time - traj.samples[n].time;
            // velocity and divergence at fraction θ of the interval
            let eval = |x: &[f64], theta: f64| -> (Vec<f64>, f64) {
                let a = interp_velocity(&vel[n], x);
                let b = interp_velocity(&vel[n + 1], x);
                let v = a
                    .iter()
                    .zip(&b)
                    .map(|(p, q)| (1.0 - theta) * p + theta * q)
                    .collect();
                let d = (1.0 - theta) * divs[n].evaluate(x) + theta * divs[n + 1].evaluate(x);
                (v, d)
            };
            let shift = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
                x.iter().zip(k).map(|(a, b)| a + c * b).collect()
            };
            let (k1, d1) = eval(&x, 0.0);
            let (k2, d2) = eval(&shift(&x, &k1, 0.5 * h), 0.5);
            let (k3, d3) = eval(&shift(&x, &k2, 0.5 * h), 0.5);
            let (k4, d4) = eval(&shift(&x, &k3, h), 1.0);
            for a in 0..dim {
                x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            integral += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
            if x.iter().any(|c| c.abs() > limit) {
                lost = true;
                break;
            }
        }
        if lost {
            dropped += 1;
            continue;
        }
        let predicted = rho0.data()[start] * (-integral).exp();
        let measured = rho_end.evaluate(&x);
        max_err = max_err.max((measured - predicted).abs() / predicted.abs().max(vac_eps));
    }
    CharacteristicsReport {
        particles: starts.len(),
        dropped,
        max_rel_error: max_err,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Max over interior samples of the L² norm of the reformulated-system
    /// residual `(ϕ, φ, u)`, relative to the L² norm of the time derivative.
    pub reform_abs: f64,
    pub reform_rel: f64,
    /// Same for the primitive momentum and continuity equations.
    pub primitive_abs: f64,
    pub primitive_rel: f64,
}

fn vec_l2(u: &VectorField) -> f64 {
    u.components()
        .iter()
        .map(|c| l2_norm(c).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Residuals of the reformulated system (coefficients from the trajectory
/// itself, viscosity regularized by `eta`) and of the primitive equations,
/// at interior samples. An optional forcing is subtracted from the
/// reformulated residual.
pub fn nonlinear_residual(
    traj: &Trajectory,
    params: &FluidParams,
    eta: f64,
    forcing: Option<&dyn Forcing>,
) -> ResidualReport {
    let mut out = ResidualReport {
        reform_abs: 0.0,
        reform_rel: 0.0,
        primitive_abs: 0.0,
        primitive_rel: 0.0,
    };
    let n = traj.samples.len();
    if n < 3 {
        return out;
    }
    let prim: Vec<(ScalarField, VectorField)> = traj
        .samples
        .iter()
        .map(|s| {
            let rho = s.density(params);
            let mom = s.u.mul_scalar(&rho);
            (rho, mom)
        })
        .collect();
    let times = traj.times();
    for i in 1..n - 1 {
        let s = &traj.samples[i];
        let d = time_derivative(traj, i).expect("three samples");
        let rv = transport_rate(params, &s.vphi, &s.u, &s.vphi);
        let (rp, ru) = symmetric_rates(params, s, s, &s.vphi, eta).expect("shared grid");
        let mut res_v = d.vphi.sub(&rv);
        let mut res_p = d.phi.sub(&rp);
        let mut res_u = d.u.sub(&ru);
        if let Some(f) = forcing {
            let fr = f.rates(s.time);
            res_v.axpy(-1.0, &fr.vphi);
            res_p.axpy(-1.0, &fr.phi);
            res_u.axpy(-1.0, &fr.u);
        }
        let abs =
            (l2_norm(&res_v).powi(2) + l2_norm(&res_p).powi(2) + vec_l2(&res_u).powi(2)).sqrt();
        let scale =
            (l2_norm(&d.vphi).powi(2) + l2_norm(&d.phi).powi(2) + vec_l2(&d.u).powi(2)).sqrt();
        out.reform_abs = out.reform_abs.max(abs);
        out.reform_rel = out.reform_rel.max(abs / scale.max(1e-300));

        let (idx, w) = fd_stencil(&times, i).expect("three samples");
        let rho_t = combine_scalar(idx.map(|j| &prim[j].0), w);
        let dim = s.u.dim();
        let mom_t: Vec<ScalarField> = (0..dim)
            .map(|c| combine_scalar(idx.map(|j| prim[j].1.component(c)), w))
            .collect();
        let (rho, mom) = &prim[i];
        let cont = rho_t.add(&mom.divergence());
        let mu = rho.map(|r| params.alpha * pow_nonneg(r, params.delta1));
        let lambda = rho.map(|r| params.beta * pow_nonneg(r, params.delta2));
        let pressure = rho.map(|r| params.a * pow_nonneg(r, params.gamma));
        let jac = s.u.jacobian();
        let div_u = s.u.divergence();
        let mut mom_res = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut r = mom_t[c].clone();
            for j in 0..dim {
                let flux = mom.component(c).mul(s.u.component(j));
                let mut ord = vec![0usize; dim];
                ord[j] = 1;
                r.axpy(1.0, &flux.derivative(&ord).expect("first order"));
                let stress = mu.mul(&jac[c][j].add(&jac[j][c]));
                r.axpy(-1.0, &stress.derivative(&ord).expect("first order"));
            }
            let mut ord = vec![0usize; dim];
            ord[c] = 1;
            r.axpy(1.0, &pressure.derivative(&ord).expect("first order"));
            r.axpy(
                -1.0,
                &lambda.mul(&div_u).derivative(&ord).expect("first order"),
            );
            mom_res.push(r);
        }
        let pabs = (l2_norm(&cont).powi(2)
            + mom_res.iter().map(|r| l2_norm(r).powi(2)).sum::<f64>())
        .sqrt();
        let pscale = (l2_norm(&rho_t).powi(2)
            + mom_t.iter().map(|r| l2_norm(r).powi(2)).sum::<f64>())
        .sqrt();
        out.primitive_abs = out.primitive_abs.max(pabs);
        out.primitive_rel = out.primitive_rel.max(pabs / pscale.max(1e-300));
    }
    out
}
