//! Coefficient objects of the reformulated system and the ellipticity
//! certificate.
//!
//! The momentum slot is kept in symmetric form, i.e. multiplied by `a1`:
//!
//! ```text
//! a1 (u_t + v·∇u) + (γ−1)/2 φ̃ ∇φ + a1 (ϕ²+η²) L u = a1 [Q1 ∇ϕ² + Q2 ∇ϕ^{2m+2}]
//! ```
//!
//! where `L u = −αΔu − (α+βϕ^{2m}) ∇div u`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{l2_norm, FieldError, Grid, ScalarField, VectorField};
use crate::params::FluidParams;

/// `x^p` for `x ≥ 0` and `p ≥ 1`; anything at or below `1e−300` maps to zero.
pub fn pow_nonneg(x: f64, p: f64) -> f64 {
    if x > 1e-300 {
        (p * x.ln()).exp()
    } else {
        0.0
    }
}

pub fn pow_field(f: &ScalarField, p: f64) -> ScalarField {
    f.map(|x| pow_nonneg(x, p))
}

/// Reformulated unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReformState {
    pub vphi: ScalarField,
    pub phi: ScalarField,
    pub u: VectorField,
    pub time: f64,
}

impl ReformState {
    pub fn zeros(grid: &Grid) -> Self {
        ReformState {
            vphi: ScalarField::zeros(grid),
            phi: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            time: 0.0,
        }
    }

    /// Build `ϕ = ρ^{(δ1−1)/2}` and `φ = ρ^{(γ−1)/2}` from one density.
    pub fn from_density(
        params: &FluidParams,
        rho: &ScalarField,
        u: VectorField,
        time: f64,
    ) -> Self {
        ReformState {
            vphi: pow_field(rho, 0.5 * (params.delta1 - 1.0)),
            phi: pow_field(rho, 0.5 * (params.gamma - 1.0)),
            u,
            time,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.vphi.grid()
    }

    pub fn check_grid(&self, other: &ReformState) -> Result<(), FieldError> {
        if self.grid() == other.grid() {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vphi.is_finite() && self.phi.is_finite() && self.u.is_finite()
    }

    /// Density reconstructed from `ϕ`.
    pub fn density(&self, params: &FluidParams) -> ScalarField {
        pow_field(&self.vphi, params.density_exponent_vphi())
    }

    /// Squared L² distances `(|ϕ−ϕ'|², |φ−φ'|², |u−u'|²)`.
    pub fn sq_distance(&self, other: &ReformState) -> (f64, f64, f64) {
        let u2: f64 = self
            .u
            .components()
            .iter()
            .zip(other.u.components())
            .map(|(a, b)| l2_norm(&a.sub(b)).powi(2))
            .sum();
        (
            l2_norm(&self.vphi.sub(&other.vphi)).powi(2),
            l2_norm(&self.phi.sub(&other.phi)).powi(2),
            u2,
        )
    }

    /// Largest pointwise difference over all unknowns.
    pub fn linf_distance(&self, other: &ReformState) -> f64 {
        let mut m = self
            .vphi
            .sub(&other.vphi)
            .max_abs()
            .max(self.phi.sub(&other.phi).max_abs());
        for (a, b) in self.u.components().iter().zip(other.u.components()) {
            m = m.max(a.sub(b).max_abs());
        }
        m
    }

    /// `self + c·other` on every unknown; time is kept.
    pub fn axpy(&self, c: f64, other: &ReformState) -> ReformState {
        let mut out = self.clone();
        out.vphi.axpy(c, &other.vphi);
        out.phi.axpy(c, &other.phi);
        out.u.axpy(c, &other.u);
        out
    }
}

/// `Σ_j A_j(V) ∂_j W`: the scalar slot `v·∇φ + (γ−1)/2 φ̃ div u` and the
/// vector slot `a1 v·∇u + (γ−1)/2 φ̃ ∇φ`.
pub fn convection_apply(
    params: &FluidParams,
    v_state: &ReformState,
    w_state: &ReformState,
) -> Result<(ScalarField, VectorField), FieldError> {
    v_state.check_grid(w_state)?;
    let half = 0.5 * (params.gamma - 1.0);
    let v = &v_state.u;
    let phi_t = &v_state.phi;
    let grad_phi = w_state.phi.gradient();
    let mut scalar = v.dot(&grad_phi);
    scalar.axpy(half, &phi_t.mul(&w_state.u.divergence()));
    let mut vector = w_state.u.advected_by(v).scaled(params.a1);
    vector.axpy(half, &grad_phi.mul_scalar(phi_t));
    Ok((scalar, vector))
}

/// `−a1 (ϕ²+η²) [αΔu + (α+βϕ^{2m}) ∇div u]`.
pub fn viscous_apply(
    params: &FluidParams,
    vphi: &ScalarField,
    u: &VectorField,
    eta: f64,
) -> VectorField {
    let (weight, bulk) = viscous_weights(params, vphi, eta);
    let mut out = u.laplacian().mul_scalar(&weight).scaled(params.alpha);
    out.axpy(1.0, &u.grad_div().mul_scalar(&weight.mul(&bulk)));
    out.scaled(-params.a1)
}

/// Pointwise `(ϕ²+η², α+βϕ^{2m})`.
pub fn viscous_weights(
    params: &FluidParams,
    vphi: &ScalarField,
    eta: f64,
) -> (ScalarField, ScalarField) {
    let weight = vphi.map(|p| p * p + eta * eta);
    let bulk = vphi.map(|p| params.bulk_coefficient(pow_nonneg(p, 2.0 * params.m)));
    (weight, bulk)
}

/// `a1 αδ1/(δ1−1) Q1(v)∇ϕ² + a1 βδ2/(δ2−1) Q2(v)∇ϕ^{2m+2}` with
/// `Q1(v) = ∇v + (∇v)ᵀ` and `Q2(v) = div v I`.
pub fn source_apply(
    params: &FluidParams,
    v_state: &ReformState,
    vphi: &ScalarField,
) -> Result<VectorField, FieldError> {
    if v_state.grid() != vphi.grid() {
        return Err(FieldError::GridMismatch);
    }
    let c1 = params.alpha * params.delta1 / (params.delta1 - 1.0);
    let c2 = params.beta * params.delta2 / (params.delta2 - 1.0);
    let g1 = vphi.map(|p| p * p).gradient();
    let g2 = pow_field(vphi, 2.0 * params.m + 2.0).gradient();
    let jac = v_state.u.jacobian();
    let div = v_state.u.divergence();
    let dim = vphi.grid().dim();
    let mut comps = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut acc = ScalarField::zeros(vphi.grid());
        for j in 0..dim {
            let q = jac[i][j].add(&jac[j][i]);
            acc.axpy(c1, &q.mul(g1.component(j)));
        }
        acc.axpy(c2, &div.mul(g2.component(i)));
        comps.push(acc.scaled(params.a1));
    }
    VectorField::from_components(comps)
}

/// Rate `ϕ_t = −v·∇ϕ − (δ1−1)/2 ϕ̃ div v` of the transport equation.
pub fn transport_rate(
    params: &FluidParams,
    vphi: &ScalarField,
    v: &VectorField,
    vphi_tilde: &ScalarField,
) -> ScalarField {
    let mut r = v.dot(&vphi.gradient()).scaled(-1.0);
    r.axpy(
        -0.5 * (params.delta1 - 1.0),
        &vphi_tilde.mul(&v.divergence()),
    );
    r
}

/// Time derivatives `(φ_t, u_t)` of the linearized `(φ, u)` system, from the
/// symmetric-form operators. `v_state` supplies `(φ̃, v)`, `w_state` the
/// unknowns and `vphi` the viscosity/source coefficient.
pub fn symmetric_rates(
    params: &FluidParams,
    v_state: &ReformState,
    w_state: &ReformState,
    vphi: &ScalarField,
    eta: f64,
) -> Result<(ScalarField, VectorField), FieldError> {
    let (cs, cv) = convection_apply(params, v_state, w_state)?;
    let visc = viscous_apply(params, vphi, &w_state.u, eta);
    let src = source_apply(params, v_state, vphi)?;
    let rate_u = src.sub(&cv).sub(&visc).scaled(1.0 / params.a1);
    Ok((cs.scaled(-1.0), rate_u))
}

/// Time derivative of `u` assembled directly in component form, using the
/// pressure factor `2Aγ/(γ−1)` and the exponent `2(δ2−1)/(δ1−1)`.
pub fn componentwise_velocity_rate(
    params: &FluidParams,
    v_state: &ReformState,
    u: &VectorField,
    phi: &ScalarField,
    vphi: &ScalarField,
    eta: f64,
) -> VectorField {
    let dim = u.dim();
    let v = &v_state.u;
    let w = vphi.map(|p| p * p + eta * eta);
    let bulk = vphi.map(|p| {
        params.alpha
            + params.beta
                * pow_nonneg(p, params.delta2 - params.delta1).powf(2.0 / (params.delta1 - 1.0))
    });
    let grad_phi = phi.gradient();
    let lap = u.laplacian();
    let gd = u.grad_div();
    let g1 = vphi.map(|p| p * p).gradient();
    let p2 = 2.0 * (params.delta2 - 1.0) / (params.delta1 - 1.0);
    let g2 = pow_field(vphi, p2).gradient();
    let jac = v.jacobian();
    let div_v = v.divergence();
    let k1 = params.alpha * params.delta1 / (params.delta1 - 1.0);
    let k2 = params.beta * params.delta2 / (params.delta2 - 1.0);
    let comps = (0..dim)
        .map(|i| {
            let mut r = v.dot(&u.component(i).gradient()).scaled(-1.0);
            r.axpy(
                -params.pressure_factor(),
                &v_state.phi.mul(grad_phi.component(i)),
            );
            r.axpy(params.alpha, &w.mul(lap.component(i)));
            r.axpy(1.0, &w.mul(&bulk).mul(gd.component(i)));
            for j in 0..dim {
                r.axpy(k1, &g1.component(j).mul(&jac[j][i].add(&jac[i][j])));
            }
            r.axpy(k2, &g2.component(i).mul(&div_v));
            r
        })
        .collect();
    VectorField::from_components(comps).expect("dim components")
}

/// Max gap between `∇ϕ^{2(δ2−1)/(δ1−1)}` and `∇ϕ^{2m+2}`.
pub fn exponent_identity_gap(params: &FluidParams, vphi: &ScalarField) -> f64 {
    let p_direct = 2.0 * (params.delta2 - 1.0) / (params.delta1 - 1.0);
    let a = pow_field(vphi, p_direct).gradient();
    let b = pow_field(vphi, 2.0 * params.m + 2.0).gradient();
    a.sub(&b).max_abs()
}

/// Quadratic form `Σ A^{pq}_{ij} ξ_p ξ_q ζ_i ζ_j` built from the coefficient
/// table of the operator `L`, for `s = ϕ^{2m}`.
pub fn ellipticity_form(params: &FluidParams, s: f64, xi: &[f64; 3], zeta: &[f64; 3]) -> f64 {
    let a1 = params.a1;
    let diag = |p: usize, i: usize| {
        if p == i {
            2.0 * a1 * params.alpha + a1 * params.beta * s
        } else {
            a1 * params.alpha
        }
    };
    let cross = a1 * params.alpha + a1 * params.beta * s;
    let mut form = 0.0;
    for i in 0..3 {
        for p in 0..3 {
            form += diag(p, i) * xi[p] * xi[p] * zeta[i] * zeta[i];
        }
        for j in 0..3 {
            if i != j {
                form += cross * xi[i] * xi[j] * zeta[i] * zeta[j];
            }
        }
    }
    form
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub samples: usize,
    pub seed: u64,
    pub min_ratio: f64,
    pub coeff_min: f64,
    pub pass: bool,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Sample the quadratic form at random grid cells and random unit `ξ, ζ`.
pub fn ellipticity_check(
    params: &FluidParams,
    vphi: &ScalarField,
    samples: usize,
    seed: u64,
) -> EllipticityReport {
    let s_field = pow_field(vphi, 2.0 * params.m);
    let coeff_min = s_field.map(|s| params.bulk_coefficient(s)).min();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let n = vphi.data().len();
    for _ in 0..samples {
        let s = s_field.data()[rng.gen_range(0..n)];
        let xi = unit_vector(&mut rng);
        let zeta = unit_vector(&mut rng);
        let ratio = ellipticity_form(params, s, &xi, &zeta) / (params.a1 * params.alpha);
        min_ratio = min_ratio.min(ratio);
    }
    EllipticityReport {
        samples,
        seed,
        min_ratio,
        coeff_min,
        pass: min_ratio >= 1.0 - 1e-9 && coeff_min > 0.0,
    }
}
