//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//!
//! Runs against the shipped configs in `configs/`; every tolerance is pinned here.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use degvisc::fields::{Grid, ScalarField, VectorField};
use degvisc::operators::{
    componentwise_velocity_rate, ellipticity_check, exponent_identity_gap, symmetric_rates,
    ReformState,
};
use degvisc::oracle::reform_mms_error;
use degvisc::oracle::ReformMode;
use degvisc::params::{validate_params, Constraint, FluidParams, RawParams};
use degvisc_cli::commands::{cmd_mms, cmd_oracle_compare, cmd_run, cmd_sweep, RunStatus};
use degvisc_cli::config::MmsBlock;
use degvisc_cli::RunConfig;

type Outcome = Result<String, String>;

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn set(cfg: &RunConfig, path: &str, value: impl Into<toml::Value>) -> RunConfig {
    cfg.with_override(path, &value.into())
        .unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

// ---- 1. admissibility --------------------------------------------------

fn admissibility() -> Outcome {
    use Constraint::*;
    let e = |k: i32| 2f64.powi(k);
    let nan = f64::NAN;
    let inf = f64::INFINITY;
    // (A, γ, α, β, δ1, δ2) and the first violated constraint, if any.
    #[rustfmt::skip]
    let cases: [([f64; 6], Option<Constraint>); 50] = [
        ([1.0, 2.0, 1.0, 0.1, 1.5, 2.5], None),
        ([0.0, 2.0, 1.0, 0.1, 1.5, 2.5], Some(PressureCoefficientPositive)),
        ([-1.0, 2.0, 1.0, 0.1, 1.5, 2.5], Some(PressureCoefficientPositive)),
        ([-0.0, 2.0, 1.0, 0.1, 1.5, 2.5], Some(PressureCoefficientPositive)),
        ([e(-40), 2.0, 1.0, 0.1, 1.5, 2.5], None),
        ([1.0, 1.0, 1.0, 0.1, 1.5, 2.5], Some(GammaAboveOne)),
        ([1.0, 0.5, 1.0, 0.1, 1.5, 2.5], Some(GammaAboveOne)),
        ([1.0, 1.0 + e(-40), 1.0, 0.1, 1.5, 2.5], None),
        ([1.0, 2.0, 0.0, 0.1, 1.5, 2.5], Some(AlphaPositive)),
        ([1.0, 2.0, -0.5, 0.1, 1.5, 2.5], Some(AlphaPositive)),
        ([1.0, 2.0, e(-30), 0.1, 1.5, 2.5], None),
        ([1.0, 2.0, 1.0, 0.1, 1.5, 1.5], Some(Delta2AboveDelta1)),
        ([1.0, 2.0, 1.0, 0.1, 2.0, 1.5], Some(Delta2AboveDelta1)),
        ([1.0, 2.0, 1.0, 0.1, 1.0, 1.0], Some(Delta2AboveDelta1)),
        ([1.0, 2.0, 1.0, 0.1, 1.0, 2.0], Some(Delta1AboveOne)),
        ([1.0, 2.0, 1.0, 0.1, 0.5, 1.0], Some(Delta1AboveOne)),
        ([1.0, 2.0, 1.0, 0.1, 1.0, 1.5], Some(Delta1AboveOne)),
        ([1.0, 2.0, 1.0, 0.1, 2.0, 3.5], None),
        ([1.0, 2.0, 1.0, 0.1, 2.0, 3.25], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 2.0, 3.0], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 1.5, 2.25], None),
        ([1.0, 2.0, 1.0, 0.1, 1.5, 2.125], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 1.25, 1.625], None),
        ([1.0, 2.0, 1.0, 0.1, 1.25, 1.5], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 1.0 + e(-20), 1.0 + e(-19)], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 1.0 + e(-20), 1.0 + e(-18)], None),
        ([1.0, 2.0, 1.0, 0.1, 2.5, 4.75], None),
        ([1.0, 2.0, 1.0, 0.1, 2.5, 4.5], Some(Delta2LowerBound)),
        ([1.0, 2.0, 1.0, 0.1, 3.0, 6.0], None),
        ([1.0, 4.0, 1.0, 0.1, 4.0, 8.5], Some(MinDeltaGammaAtMostThree)),
        ([1.0, 4.0, 1.0, 0.1, 3.0, 6.0], None),
        ([1.0, 3.0, 1.0, 0.1, 4.0, 8.5], None),
        ([1.0, 3.5, 1.0, 0.1, 3.5, 7.25], Some(MinDeltaGammaAtMostThree)),
        ([1.0, 3.0, 1.0, 0.1, 3.5, 7.25], None),
        ([1.0, 3.0 + e(-40), 1.0, 0.1, 3.5, 7.25], Some(MinDeltaGammaAtMostThree)),
        ([1.0, 3.5, 1.0, 0.1, 3.0, 6.0], None),
        ([1.0, 3.5, 1.0, 0.1, 3.0 + e(-40), 6.5], Some(MinDeltaGammaAtMostThree)),
        ([nan, 2.0, 1.0, 0.1, 1.5, 2.5], Some(Finite)),
        ([1.0, inf, 1.0, 0.1, 1.5, 2.5], Some(Finite)),
        ([1.0, 2.0, inf, 0.1, 1.5, 2.5], Some(Finite)),
        ([1.0, 2.0, 1.0, nan, 1.5, 2.5], Some(Finite)),
        ([1.0, 2.0, 1.0, 0.1, 1.5, inf], Some(Finite)),
        ([0.0, nan, 1.0, 0.1, 1.5, 2.5], Some(Finite)),
        ([1.0, 2.0, 1.0, -1.0, 1.5, 2.5], None),
        ([1.0, 2.0, 1.0, 0.0, 1.5, 2.5], None),
        ([1.0, 2.0, 1.0, 1e6, 1.5, 2.5], None),
        ([0.0, 1.0, 1.0, 0.1, 1.5, 2.5], Some(PressureCoefficientPositive)),
        ([1.0, 1.0, 0.0, 0.1, 1.5, 2.5], Some(GammaAboveOne)),
        ([1.0, 2.0, 0.0, 0.1, 1.5, 1.5], Some(AlphaPositive)),
        ([-1.0, -1.0, -1.0, -1.0, -1.0, -1.0], Some(PressureCoefficientPositive)),
    ];
    let mut wrong = Vec::new();
    for (i, ([a, g, al, b, d1, d2], expect)) in cases.iter().enumerate() {
        let got = validate_params(RawParams::new(*a, *g, *al, *b, *d1, *d2))
            .err()
            .map(|e| e.constraint());
        if got != *expect {
            wrong.push(format!("#{i}: expected {expect:?}, got {got:?}"));
        }
    }
    check(
        wrong.is_empty(),
        format!(
            "{} tuples, {} misclassified {:?}",
            cases.len(),
            wrong.len(),
            wrong
        ),
    )
}

// ---- 2. ellipticity -----------------------------------------------------

fn random_params(rng: &mut ChaCha8Rng) -> FluidParams {
    let d1: f64 = rng.gen_range(1.05..3.0);
    let d2 = (2.5 * d1 - 1.5).max(d1 + 0.05) + rng.gen_range(0.0..1.5);
    let raw = RawParams::new(
        rng.gen_range(0.1..5.0),
        rng.gen_range(1.05..3.0),
        rng.gen_range(0.1..3.0),
        rng.gen_range(-1.0..1.0),
        d1,
        d2,
    );
    validate_params(raw).expect("drawn inside the admissible region")
}

/// Smooth periodic field `Σ c_k sin(kx + p_k)`, `k = 0..3`, squashed to `(lo, hi)`.
fn random_field(rng: &mut ChaCha8Rng, g: &Grid, lo: f64, hi: f64) -> ScalarField {
    let c: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    ScalarField::from_fn(g, |x| {
        let s: f64 = c
            .iter()
            .enumerate()
            .map(|(k, (a, p))| a * (k as f64 * x[0] + p).sin())
            .sum();
        lo + (hi - lo) * 0.5 * (1.0 + s.tanh())
    })
}

fn ellipticity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let g = Grid::new(1, 64, 2.0 * PI).unwrap();
    let mut worst = f64::INFINITY;
    let mut taken = 0;
    let mut failures = 0;
    while taken < 20 {
        let p = random_params(&mut rng);
        let top = if p.beta < 0.0 {
            (p.alpha / (2.0 * -p.beta)).powf(0.5 / p.m)
        } else {
            2.0
        };
        let vphi = random_field(&mut rng, &g, 0.0, top);
        let coeff_min = vphi.map(|v| p.bulk_coefficient(v.powf(2.0 * p.m))).min();
        if coeff_min < p.alpha / 2.0 {
            continue;
        }
        let r = ellipticity_check(&p, &vphi, 10_000, taken as u64);
        worst = worst.min(r.min_ratio);
        if !(r.pass && r.min_ratio >= 1.0 - 1e-9) {
            failures += 1;
        }
        taken += 1;
    }
    check(
        failures == 0,
        format!("20 cases x 10^4 samples, min ratio {worst:.12}, failures {failures}"),
    )
}

// ---- 3. reformulation equivalence --------------------------------------

fn equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst = 0.0f64;
    let mut worst_identity = 0.0f64;
    for case in 0..20 {
        let p = random_params(&mut rng);
        let dim = 1 + case % 2;
        let g = Grid::new(dim, 64, 2.0 * PI).unwrap();
        let rho = random_field(&mut rng, &g, 0.6, 1.4);
        let u = VectorField::from_components(
            (0..dim)
                .map(|_| random_field(&mut rng, &g, -0.5, 0.5))
                .collect(),
        )
        .unwrap();
        let w = ReformState::from_density(&p, &rho, u, 0.0);
        let eta = rng.gen_range(0.0..0.5);
        let (_, sym) = symmetric_rates(&p, &w, &w, &w.vphi, eta).unwrap();
        let direct = componentwise_velocity_rate(&p, &w, &w.u, &w.phi, &w.vphi, eta);
        worst = worst.max(sym.sub(&direct).max_abs() / direct.max_abs().max(1e-300));
        let coeff = ((p.gamma - 1.0) / (2.0 * p.a1) - 2.0 * p.a * p.gamma / (p.gamma - 1.0)).abs()
            / (2.0 * p.a * p.gamma / (p.gamma - 1.0));
        let expo = ((p.delta2 - 1.0) / (p.delta1 - 1.0) - (p.m + 1.0)).abs() / (p.m + 1.0);
        let scale = degvisc::operators::pow_field(&w.vphi, 2.0 * p.m + 2.0)
            .gradient()
            .max_abs();
        let field = exponent_identity_gap(&p, &w.vphi) / (1.0 + scale);
        worst_identity = worst_identity.max(coeff).max(expo).max(field);
    }
    check(
        worst <= 1e-9 && worst_identity <= 1e-9,
        format!("20 states, max relative gap {worst:.3e}, identities {worst_identity:.3e}"),
    )
}

// ---- 4. manufactured solutions -----------------------------------------

fn mms() -> Outcome {
    let cfg = config("mms.toml");
    let dir = tmp();
    let mut sink = Vec::new();
    let report = cmd_mms(&cfg, dir.path(), &mut sink).map_err(|e| e.to_string())?;
    // Spatial floor: at a fixed step the error must not depend on the grid.
    let params = validate_params(cfg.params.raw()).unwrap();
    let mms = cfg.mms.clone().unwrap_or_default();
    let spatial: Vec<f64> = [128usize, 256]
        .iter()
        .map(|&n| {
            let g = Grid::new(1, n, cfg.grid.l).unwrap();
            reform_mms_error(
                &params,
                &mms.reform_case,
                &g,
                mms.dt0,
                mms.t_end,
                mms.eta,
                ReformMode::Linearized,
            )
            .unwrap()
        })
        .collect();
    let spatial_gap = (spatial[0] - spatial[1]).abs() / spatial[1];
    check(
        report.reform_pass && report.oracle_pass && spatial_gap <= 1e-6,
        format!(
            "reform orders {:?} (3.0±0.2), oracle orders {:?} (4.0±0.3), n=128 vs 256 error gap {spatial_gap:.2e}",
            report.reform.orders, report.oracle.orders
        ),
    )
}

// ---- 5, 6, 8. oracle equivalence, contraction, conservation ------------

struct Compare {
    sup: [f64; 2],
    mass_reform: f64,
    mass_oracle: f64,
}

fn compare_runs() -> Result<Compare, String> {
    let cfg = set(&config("smooth_blob.toml"), "compare.levels", 2);
    let dir = tmp();
    let mut sink = Vec::new();
    let r = cmd_oracle_compare(&cfg, dir.path(), &mut sink).map_err(|e| e.to_string())?;
    Ok(Compare {
        sup: [r.levels[0].sup_distance, r.levels[1].sup_distance],
        mass_reform: r
            .levels
            .iter()
            .map(|l| l.reform_mass_drift)
            .fold(0.0, f64::max),
        mass_oracle: r
            .levels
            .iter()
            .map(|l| l.oracle_mass_drift)
            .fold(0.0, f64::max),
    })
}

fn oracle_equivalence(c: &Compare) -> Outcome {
    let ratio = c.sup[1] / c.sup[0];
    check(
        c.sup[0] <= 5e-3 && ratio <= 1.3 / 4.0,
        format!(
            "n=256 sup L2 {:.3e} (<= 5e-3), n=512 {:.3e}, ratio {ratio:.3} (<= 0.325)",
            c.sup[0], c.sup[1]
        ),
    )
}

fn contraction() -> Result<(String, f64, f64), String> {
    let base = config("smooth_blob.toml");
    let mut out = Vec::new();
    let mut mass = (0.0f64, 0.0f64);
    let mut ok = true;
    for t in [0.01, 0.005] {
        let cfg = set(&set(&base, "solver.T", t), "solver.picard_tol", 1e-10);
        let cfg = set(&cfg, "solver.cadence", t / 10.0);
        let dir = tmp();
        let mut sink = Vec::new();
        let r = cmd_oracle_compare(&cfg, dir.path(), &mut sink).map_err(|e| e.to_string())?;
        let l = &r.levels[0];
        let rate = l.fitted_ratio.unwrap_or(f64::INFINITY);
        ok &= rate <= 0.5 && l.picard_iterations <= 10;
        mass = (
            mass.0.max(l.reform_mass_drift),
            mass.1.max(l.oracle_mass_drift),
        );
        out.push(format!(
            "T={t}: r={rate:.3e}, {} iterations",
            l.picard_iterations
        ));
    }
    let detail = format!(
        "{} (r <= 0.5, <= 10 iterations at tol 1e-10)",
        out.join("; ")
    );
    if ok {
        Ok((detail, mass.0, mass.1))
    } else {
        Err(detail)
    }
}

fn conservation(c: &Compare, extra: (f64, f64)) -> Outcome {
    let reform = c.mass_reform.max(extra.0);
    let oracle = c.mass_oracle.max(extra.1);
    check(
        reform <= 1e-6 && oracle <= 1e-10,
        format!("max mass drift reform {reform:.3e} (<= 1e-6), oracle {oracle:.3e} (<= 1e-10)"),
    )
}

// ---- 7. η-continuation ---------------------------------------------------

fn continuation() -> Outcome {
    let cfg = set(
        &config("vacuum_bump.toml"),
        "output.diagnostics",
        toml::Value::Array(Vec::new()),
    );
    let dir = tmp();
    let s = cmd_run(&cfg, dir.path(), false).map_err(|e| e.to_string())?;
    let d: Vec<f64> = s.continuation.iter().filter_map(|l| l.d).collect();
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    check(
        s.status == RunStatus::Ok && s.continuation.len() == 5 && d.len() == 4 && decreasing,
        format!(
            "eta 0.5·2^-j, j=0..4: d = {:?}, strictly decreasing: {decreasing}",
            d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
        ),
    )
}

// ---- 9. vacuum invariant -------------------------------------------------

fn vacuum_invariant() -> Outcome {
    let base = config("vacuum_bump.toml");
    let base = set(&base, "solver.eta.eta0", 0.0);
    let base = set(
        &base,
        "output.diagnostics",
        toml::Value::Array(vec!["vacuum".into()]),
    );
    let mut res = Vec::new();
    for (n, dt) in [(256i64, 5e-4), (512, 2.5e-4)] {
        let cfg = set(&set(&base, "grid.n", n), "solver.dt", dt);
        let cfg = set(&cfg, "solver.cadence", dt);
        let dir = tmp();
        let s = cmd_run(&cfg, dir.path(), false).map_err(|e| e.to_string())?;
        let v = s.vacuum.ok_or("vacuum diagnostic missing")?;
        if v.no_vacuum || s.status != RunStatus::Ok {
            return Err(format!(
                "n={n}: status {:?}, no_vacuum {}",
                s.status, v.no_vacuum
            ));
        }
        res.push(v.max);
    }
    let factor = res[0] / res[1];
    check(
        factor >= 2.0,
        format!(
            "max |u_t+u·∇u| on ρ<1e-10: {:.3e} -> {:.3e}, factor {factor:.2} (>= 2)",
            res[0], res[1]
        ),
    )
}

// ---- 10. horizons ----------------------------------------------------------

fn horizons() -> Outcome {
    let cfg = config("amplitude_sweep.toml");
    let dir = tmp();
    let r = cmd_sweep(&cfg, dir.path(), 3, false).map_err(|e| e.to_string())?;
    let t_end = cfg.solver.t_end;
    let mut exact = true;
    let mut t_valid = Vec::new();
    for row in &r.rows {
        let (Some(c3), Some(m), Some(tss), Some(tv)) =
            (row.c3, row.m, row.t_star_star, row.t_valid)
        else {
            return Err(format!("row {} incomplete: {row:?}", row.index));
        };
        exact &= tss == t_end.min((1.0 + c3).powf(-4.0 * m - 4.0));
        t_valid.push(tv);
    }
    let monotone = t_valid.windows(2).all(|w| w[1] <= w[0]);
    check(
        exact && monotone && r.rows.len() == 3,
        format!(
            "T** exact: {exact}; t_valid at scale 1,2,4: {t_valid:?} (nonincreasing: {monotone})"
        ),
    )
}

// ---- 11. determinism -------------------------------------------------------

/// Every file under `dir` except `timings.csv`, as paths relative to `dir`.
fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "timings.csv") {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = set(&config("smooth_blob.toml"), "grid.n", 64);
    let (a, b) = (tmp(), tmp());
    cmd_run(&cfg, a.path(), true).map_err(|e| e.to_string())?;
    cmd_run(&cfg, b.path(), true).map_err(|e| e.to_string())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    if fa != fb {
        return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    if !fa.iter().any(|p| p.starts_with("snapshots")) {
        return Err("no snapshots written".into());
    }
    let mut differing = Vec::new();
    for rel in &fa {
        if std::fs::read(a.path().join(rel)).unwrap() != std::fs::read(b.path().join(rel)).unwrap()
        {
            differing.push(rel.display().to_string());
        }
    }
    check(
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let mut lines: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let r = f();
        (r, t.elapsed())
    };
    let budget = |r: Outcome, d: Duration, limit: f64| match r {
        Ok(s) if d.as_secs_f64() > limit => Err(format!("{s}; over the {limit} s budget")),
        other => other,
    };

    let (r, d) = timed(&admissibility);
    lines.push((1, "admissibility", budget(r, d, 1.0), d));
    let (r, d) = timed(&ellipticity);
    lines.push((2, "ellipticity certificate", budget(r, d, 10.0), d));
    let (r, d) = timed(&equivalence);
    lines.push((3, "reformulation equivalence", budget(r, d, 10.0), d));
    let (r, d) = timed(&mms);
    lines.push((4, "manufactured-solution orders", budget(r, d, 120.0), d));

    let t = Instant::now();
    let compare = compare_runs();
    let d5 = t.elapsed();
    let t = Instant::now();
    let contract = contraction();
    let d6 = t.elapsed();
    match &compare {
        Ok(c) => lines.push((
            5,
            "oracle equivalence",
            budget(oracle_equivalence(c), d5, 300.0),
            d5,
        )),
        Err(e) => lines.push((5, "oracle equivalence", Err(e.clone()), d5)),
    }
    let extra = match &contract {
        Ok((s, a, b)) => {
            lines.push((
                6,
                "Picard contraction",
                budget(Ok(s.clone()), d6, 180.0),
                d6,
            ));
            (*a, *b)
        }
        Err(e) => {
            lines.push((6, "Picard contraction", Err(e.clone()), d6));
            (f64::INFINITY, f64::INFINITY)
        }
    };
    let (r, d) = timed(&continuation);
    lines.push((7, "eta-continuation Cauchy trend", budget(r, d, 300.0), d));
    match &compare {
        Ok(c) => lines.push((8, "conservation", conservation(c, extra), d5 + d6)),
        Err(e) => lines.push((8, "conservation", Err(e.clone()), d5)),
    }
    let (r, d) = timed(&vacuum_invariant);
    lines.push((9, "vacuum invariant", r, d));
    let (r, d) = timed(&horizons);
    lines.push((10, "horizon arithmetic and trend", r, d));
    let (r, d) = timed(&determinism);
    lines.push((11, "determinism", r, d));

    let mut failed = 0;
    for (k, name, r, d) in &lines {
        let (verdict, detail) = match r {
            Ok(s) => ("PASS", s),
            Err(s) => {
                failed += 1;
                ("FAIL", s)
            }
        };
        println!(
            "criterion {k:>2} {verdict} {name} [{:.2} s]: {detail}",
            d.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        lines.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
