#![allow(dead_code)]

use std::f64::consts::PI;

use degvisc::fields::{Grid, ScalarField, VectorField};
use degvisc::operators::ReformState;
use degvisc::params::{validate_params, FluidParams, RawParams};
use proptest::prelude::*;

/// `c[0] + Σ_k c[2k-1] cos(k θ·x) + c[2k] sin(k θ·x)` with `θ` mixing the
/// axes, `k = 1..=(c.len()-1)/2`.
pub fn trig_field(grid: &Grid, c: &[f64]) -> ScalarField {
    let l = grid.box_length();
    let dim = grid.dim();
    ScalarField::from_fn(grid, |x| {
        let mut v = c[0];
        for k in 1..=(c.len() - 1) / 2 {
            let mut arg = 0.0;
            for (a, xa) in x.iter().take(dim).enumerate() {
                arg += (k + a) as f64 * xa;
            }
            arg *= 2.0 * PI / l;
            v += c[2 * k - 1] * arg.cos() + c[2 * k] * arg.sin();
        }
        v
    })
}

pub fn coeffs(modes: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * modes + 1)
}

pub fn params(beta: f64, delta1: f64, delta2: f64) -> FluidParams {
    validate_params(RawParams::new(1.0, 2.0, 1.0, beta, delta1, delta2)).unwrap()
}

/// Smooth positive density `1 + a sin(x) + b cos(2x)` scaled to the box.
pub fn smooth_density(grid: &Grid, a: f64, b: f64) -> ScalarField {
    let k = 2.0 * PI / grid.box_length();
    ScalarField::from_fn(grid, |x| {
        1.0 + a * (k * x[0]).sin() + b * (2.0 * k * x[0]).cos()
    })
}

pub fn sine_velocity(grid: &Grid, amp: f64, k: i32) -> VectorField {
    let kk = 2.0 * PI * f64::from(k) / grid.box_length();
    VectorField::from_fn(
        grid,
        |x, c| if c == 0 { amp * (kk * x[0]).sin() } else { 0.0 },
    )
}

/// `ρ = amp · exp(1 − 1/(1 − (x/R)²))` on `|x| < R`, zero outside.
pub fn compact_bump(grid: &Grid, amp: f64, radius: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let s = (x[0] / radius).powi(2);
        if s < 1.0 {
            amp * (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

pub fn state(params: &FluidParams, rho: &ScalarField, u: VectorField) -> ReformState {
    ReformState::from_density(params, rho, u, 0.0)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
