mod common;

use std::f64::consts::PI;

use common::{coeffs, compact_bump, params, sine_velocity, smooth_density, state, trig_field};
use degvisc::fields::{l2_norm, Grid, ScalarField, VectorField};
use degvisc::fixedpoint::{
    eta_continuation, fixed_point_residual, picard_solve, trajectory_distance, window_dt,
    EtaSchedule, PicardProblem, PicardSettings,
};
use degvisc::linearized::{
    nu_bar, solve_linearized, transport_step, Frozen, LinearProblem, SolverSettings, StepPolicy,
    Trajectory,
};
use degvisc::operators::ReformState;
use degvisc::params::FluidParams;
use proptest::prelude::*;

fn uniform(p: &FluidParams, eta: f64, t_end: f64, dt: f64, clip: bool) -> LinearProblem<'_> {
    LinearProblem {
        params: p,
        eta,
        t_end,
        policy: StepPolicy::Uniform { dt },
        cadence: None,
        settings: SolverSettings {
            clip,
            enforce_validity: false,
            ..SolverSettings::default()
        },
    }
}

#[test]
fn transport_translation_is_third_order() {
    let p = params(0.1, 1.5, 2.5);
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let c = 1.0;
    let f0 = |x: f64| (0.5 * x.sin()).exp();
    let coeff = ReformState {
        vphi: ScalarField::from_fn(&g, |x| 2.0 + x[0].cos()),
        phi: ScalarField::zeros(&g),
        u: VectorField::from_fn(&g, |_, _| c),
        time: 0.0,
    };
    let t_end = 1.0;
    let exact = ScalarField::from_fn(&g, |x| f0(x[0] - c * t_end));
    let mut errors = Vec::new();
    for steps in [10usize, 20, 40] {
        let dt = t_end / steps as f64;
        let mut y = ScalarField::from_fn(&g, |x| f0(x[0]));
        for _ in 0..steps {
            y = transport_step(&p, &y, [&coeff, &coeff, &coeff], None, dt).next;
        }
        errors.push(l2_norm(&y.sub(&exact)));
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 3.0).abs() <= 0.2, "order {order} from {errors:?}");
    }
}

#[test]
fn transport_first_substep_closed_form() {
    let p = params(0.1, 1.5, 2.5);
    let g = Grid::new(1, 32, 2.0 * PI).unwrap();
    let one = ScalarField::constant(&g, 1.0);
    let coeff = ReformState {
        vphi: one.clone(),
        phi: ScalarField::zeros(&g),
        u: sine_velocity(&g, 0.3, 1),
        time: 0.0,
    };
    let dt = 0.01;
    let step = transport_step(&p, &one, [&coeff, &coeff, &coeff], None, dt);
    // y + (dt/3) rate with rate = −(δ1−1)/2 · div v, v·∇1 = 0
    let expect = ScalarField::from_fn(&g, |x| {
        1.0 - dt / 3.0 * 0.5 * (p.delta1 - 1.0) * 0.3 * x[0].cos()
    });
    assert!(step.stages[1].sub(&expect).max_abs() < 1e-12);
}

#[test]
fn transport_without_velocity_is_identity() {
    let p = params(0.1, 1.5, 2.5);
    let g = Grid::new(2, 16, 2.0 * PI).unwrap();
    let y = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * (x[0] - x[1]).sin());
    let coeff = ReformState::zeros(&g);
    let out = transport_step(&p, &y, [&coeff, &coeff, &coeff], None, 0.1).next;
    assert!(out.sub(&y).max_abs() < 1e-15);
}

#[test]
fn divergence_free_mode_decays_at_viscous_rate() {
    // u_t = αw²Δu for constant ϕ = w, β = 0 (after dividing the a1 u_t block)
    let p = params(0.0, 1.5, 2.5);
    let g = Grid::new(2, 16, 2.0 * PI).unwrap();
    let w = 0.8;
    let coeff = ReformState {
        vphi: ScalarField::constant(&g, w),
        ..ReformState::zeros(&g)
    };
    let init = ReformState {
        u: VectorField::from_fn(&g, |x, c| if c == 0 { x[1].sin() } else { 0.0 }),
        ..coeff.clone()
    };
    let t_end = 0.5;
    let traj = solve_linearized(
        &uniform(&p, 0.0, t_end, 0.01, true),
        &init,
        &Frozen(coeff),
        None,
    )
    .unwrap();
    let measured = -(traj.last().u.max_abs() / init.u.max_abs()).ln() / t_end;
    let rate = p.alpha * w * w;
    assert!(
        ((measured - rate) / rate).abs() < 0.01,
        "{measured} vs {rate}"
    );
}

#[test]
fn fully_degenerate_velocity_is_frozen() {
    let p = params(-0.2, 1.5, 2.5);
    let g = Grid::new(2, 16, 2.0 * PI).unwrap();
    let init = ReformState {
        u: VectorField::from_fn(&g, |x, c| (x[0] + 3.0 * x[1] + c as f64).sin()),
        ..ReformState::zeros(&g)
    };
    let traj = solve_linearized(
        &uniform(&p, 0.0, 0.3, 0.05, true),
        &init,
        &Frozen(ReformState::zeros(&g)),
        None,
    )
    .unwrap();
    assert_eq!(traj.last().u, init.u);
}

#[test]
fn viscous_coefficient_uses_new_level_vphi() {
    let p = params(0.1, 1.5, 2.5);
    let g = Grid::new(1, 32, 2.0 * PI).unwrap();
    let init = state(&p, &smooth_density(&g, 0.3, 0.1), sine_velocity(&g, 0.4, 1));
    let coeff = state(
        &p,
        &smooth_density(&g, -0.2, 0.0),
        sine_velocity(&g, 0.5, 2),
    );
    let eta = 0.2;
    let traj = solve_linearized(
        &uniform(&p, eta, 0.1, 0.02, true),
        &init,
        &Frozen(coeff.clone()),
        None,
    )
    .unwrap();
    for (rec, st) in traj.steps.iter().zip(&traj.stages) {
        let from_new = nu_bar(&p, &[&st[0].vphi, &st[1].vphi, &st[2].vphi], eta);
        assert_eq!(rec.nu_bar, from_new);
    }
    let from_coeff = nu_bar(&p, &[&coeff.vphi], eta);
    assert!(traj.steps.iter().any(|r| r.nu_bar != from_coeff));
}

fn solve_w(
    p: &FluidParams,
    vphi: &ScalarField,
    coeff: &ReformState,
    phi: ScalarField,
    u: VectorField,
) -> Trajectory {
    let init = ReformState {
        vphi: vphi.clone(),
        phi,
        u,
        time: 0.0,
    };
    solve_linearized(
        &uniform(p, 0.1, 0.2, 0.02, false),
        &init,
        &Frozen(coeff.clone()),
        None,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn superposition_for_fixed_coefficients(c1 in coeffs(2), c2 in coeffs(2), c3 in coeffs(2), c4 in coeffs(2)) {
        let p = params(0.1, 1.5, 2.5);
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let coeff = state(&p, &smooth_density(&g, 0.2, 0.1), sine_velocity(&g, 0.3, 1));
        let vphi = coeff.vphi.clone();
        let vel = |c: &[f64]| VectorField::from_components(vec![trig_field(&g, c)]).unwrap();
        let (phi1, u1, phi2, u2) = (trig_field(&g, &c1), vel(&c2), trig_field(&g, &c3), vel(&c4));
        let a = solve_w(&p, &vphi, &coeff, phi1.clone(), u1.clone());
        let b = solve_w(&p, &vphi, &coeff, phi2.clone(), u2.clone());
        let ab = solve_w(&p, &vphi, &coeff, phi1.add(&phi2), u1.add(&u2));
        // The source term does not depend on W, so the map is affine.
        let zero = solve_w(&p, &vphi, &coeff, ScalarField::zeros(&g), VectorField::zeros(&g));
        let (la, lb, lab, lz) = (a.last(), b.last(), ab.last(), zero.last());
        let gap_phi = la.phi.add(&lb.phi).sub(&lab.phi).sub(&lz.phi).max_abs();
        let gap_u = la.u.add(&lb.u).sub(&lab.u).sub(&lz.u).max_abs();
        let scale = 1.0 + lab.phi.max_abs() + lab.u.max_abs();
        prop_assert!(gap_phi.max(gap_u) <= 1e-9 * scale, "gap {:e}", gap_phi.max(gap_u));
    }
}

fn vacuum_problem() -> (FluidParams, ReformState) {
    let p = params(0.1, 2.0, 3.5);
    let g = Grid::new(1, 256, 10.0).unwrap();
    let u = VectorField::from_fn(&g, |x, _| 0.2 * (2.0 * PI * x[0] / 10.0).sin());
    let init = state(&p, &compact_bump(&g, 0.5, 3.0), u);
    (p, init)
}

fn picard(tol: f64, max_iter: usize, cadence: Option<f64>) -> PicardSettings {
    PicardSettings {
        tol,
        max_iter,
        cadence,
        dt: None,
        solver: SolverSettings::default(),
    }
}

#[test]
fn clipping_keeps_densities_nonnegative_and_small() {
    let (p, init) = vacuum_problem();
    let total = init.density(&p).integral();
    let prob = PicardProblem {
        params: &p,
        eta: 0.0,
        t_end: 0.1,
        settings: picard(1e-12, 50, Some(0.01)),
        forcing: None,
    };
    let (traj, trace) = picard_solve(&prob, &init).unwrap();
    assert!(trace.converged);
    for s in &traj.samples {
        assert!(s.vphi.min() >= 0.0 && s.phi.min() >= 0.0);
    }
    let worst = traj
        .steps
        .iter()
        .map(|s| s.clipped_mass)
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10 * total, "clipped {worst:e} of {total}");
}

fn blob(p: &FluidParams, n: usize, amp_rho: f64, amp_u: f64) -> ReformState {
    let g = Grid::new(1, n, 2.0 * PI).unwrap();
    let rho = ScalarField::from_fn(&g, |x| 1.0 + amp_rho * (-x[0] * x[0] / 0.5).exp());
    state(p, &rho, sine_velocity(&g, amp_u, 1))
}

#[test]
fn picard_contracts_geometrically_on_short_windows() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.1, 0.1);
    let prob = PicardProblem {
        params: &p,
        eta: 0.0,
        t_end: 0.01,
        settings: picard(1e-20, 20, None),
        forcing: None,
    };
    let (_, trace) = picard_solve(&prob, &init).unwrap();
    let s: Vec<f64> = trace.iterations.iter().map(|i| i.s).collect();
    assert!(s.len() >= 3, "{s:?}");
    assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
    let r = trace.fitted_ratio(0.0).unwrap();
    assert!(r < 0.5, "fitted ratio {r}");
}

#[test]
fn picard_window_scan_finds_a_failing_window() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.5, 2.0);
    let solver = SolverSettings {
        enforce_validity: false,
        ..SolverSettings::default()
    };
    let mut t = 0.05;
    let mut iters = Vec::new();
    let mut failed_at = None;
    for _ in 0..10 {
        let settings = PicardSettings {
            solver,
            ..picard(1e-10, 10, None)
        };
        let prob = PicardProblem {
            params: &p,
            eta: 0.0,
            t_end: t,
            settings,
            forcing: None,
        };
        match picard_solve(&prob, &init) {
            Ok((_, tr)) if tr.converged => iters.push(tr.final_k),
            _ => {
                failed_at = Some(t);
                break;
            }
        }
        t *= 2.0;
    }
    assert!(
        failed_at.is_some(),
        "no failing window up to {t}; iterations {iters:?}"
    );
    assert!(iters.windows(2).all(|w| w[1] >= w[0]), "{iters:?}");
    assert!(iters.last() > iters.first());
}

#[test]
fn converged_solution_is_a_fixed_point() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.1, 0.1);
    let tol = 1e-10;
    let prob = PicardProblem {
        params: &p,
        eta: 0.1,
        t_end: 0.05,
        settings: picard(tol, 50, Some(0.01)),
        forcing: None,
    };
    let (traj, trace) = picard_solve(&prob, &init).unwrap();
    assert!(trace.converged);
    let dt = window_dt(&prob, &init);
    let r = fixed_point_residual(&prob, &init, &traj, dt).unwrap();
    assert!(r <= 10.0 * tol, "residual {r:e}");
}

#[test]
fn picard_is_deterministic() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.1, 0.3);
    let prob = PicardProblem {
        params: &p,
        eta: 0.2,
        t_end: 0.05,
        settings: picard(1e-12, 50, Some(0.01)),
        forcing: None,
    };
    let (a, ta) = picard_solve(&prob, &init).unwrap();
    let (b, tb) = picard_solve(&prob, &init).unwrap();
    assert_eq!(a.samples, b.samples);
    let sa: Vec<f64> = ta.iterations.iter().map(|i| i.s).collect();
    let sb: Vec<f64> = tb.iterations.iter().map(|i| i.s).collect();
    assert_eq!(sa, sb);
}

#[test]
fn single_level_continuation_is_picard() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.1, 0.1);
    let settings = picard(1e-12, 50, Some(0.01));
    let schedule = EtaSchedule {
        eta0: 0.3,
        factor: 0.5,
        max_levels: 1,
        cauchy_tol: 0.0,
    };
    let (cont, rep) = eta_continuation(&p, &init, &schedule, 0.05, settings, None).unwrap();
    let prob = PicardProblem {
        params: &p,
        eta: 0.3,
        t_end: 0.05,
        settings,
        forcing: None,
    };
    let (direct, _) = picard_solve(&prob, &init).unwrap();
    assert_eq!(rep.levels.len(), 1);
    assert_eq!(cont.samples, direct.samples);
}

#[test]
fn continuation_limit_matches_direct_solve_away_from_vacuum() {
    let p = params(0.1, 1.5, 2.5);
    let init = blob(&p, 64, 0.1, 0.1);
    let settings = picard(1e-14, 50, Some(0.01));
    let cauchy_tol = 1e-3;
    let schedule = EtaSchedule {
        eta0: 0.5,
        factor: 0.5,
        max_levels: 5,
        cauchy_tol,
    };
    let (last, rep) = eta_continuation(&p, &init, &schedule, 0.05, settings, None).unwrap();
    assert!(rep.cauchy_reached);
    assert!(
        (3..=5).contains(&rep.levels.len()),
        "{} levels",
        rep.levels.len()
    );
    let prob = PicardProblem {
        params: &p,
        eta: 0.0,
        t_end: 0.05,
        settings,
        forcing: None,
    };
    let (direct, _) = picard_solve(&prob, &init).unwrap();
    let gap = trajectory_distance(&last, &direct);
    assert!(gap <= 2.0 * cauchy_tol, "gap {gap:e}");
}

#[test]
fn continuation_trend_on_vacuum_data() {
    let p = params(0.1, 2.0, 3.5);
    let g = Grid::new(1, 128, 10.0).unwrap();
    let u = VectorField::from_fn(&g, |x, _| 0.2 * (2.0 * PI * x[0] / 10.0).sin());
    let init = state(&p, &compact_bump(&g, 0.5, 3.0), u);
    let schedule = EtaSchedule {
        eta0: 0.5,
        factor: 0.5,
        max_levels: 5,
        cauchy_tol: 0.0,
    };
    let (_, rep) = eta_continuation(
        &p,
        &init,
        &schedule,
        0.1,
        picard(1e-14, 50, Some(0.01)),
        None,
    )
    .unwrap();
    let d = rep.distances();
    assert_eq!(d.len(), 4);
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}
