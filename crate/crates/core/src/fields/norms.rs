//! Discrete Sobolev, seminorm and weighted norms.
//!
//! Spectral norms use `‖f‖_s² = L^dim Σ_k (1+|k|²)^s |c_k|²`, which makes
//! `‖f‖_0` coincide with the quadrature L² norm.

use serde::{Deserialize, Serialize};

use super::{FieldError, ScalarField, Spectrum, VectorField};

fn spectral_sum(f: &ScalarField, weight: impl Fn(f64) -> f64) -> f64 {
    let s = Spectrum::forward(f);
    let vol = f.grid().volume();
    let mut acc = 0.0;
    for (i, c) in s.coeffs().iter().enumerate() {
        let (k, _) = s.wavevector(i);
        acc += weight(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * c.norm_sqr();
    }
    acc * vol
}

/// `‖f‖_s` for any integer `s ≥ 0`.
pub fn sobolev_norm(f: &ScalarField, s: u32) -> f64 {
    spectral_sum(f, |k2| (1.0 + k2).powi(s as i32)).sqrt()
}

/// Homogeneous seminorm `|D^k f|_2` in the Frobenius convention. Odd
/// derivatives along an axis sitting at Nyquist vanish, as in the spectral
/// derivative.
pub fn seminorm(f: &ScalarField, k: u32) -> f64 {
    let dim = f.grid().dim();
    let table = multi_indices(dim, k as usize);
    let s = Spectrum::forward(f);
    let mut acc = 0.0;
    for (i, c) in s.coeffs().iter().enumerate() {
        let (kv, nyq) = s.wavevector(i);
        let mut w = 0.0;
        for (idx, mult) in &table {
            if (0..dim).any(|a| nyq[a] && idx[a] % 2 == 1) {
                continue;
            }
            w += mult
                * (0..dim)
                    .map(|a| kv[a].powi(2 * idx[a] as i32))
                    .product::<f64>();
        }
        acc += w * c.norm_sqr();
    }
    (acc * f.grid().volume()).sqrt()
}

pub fn vector_sobolev_norm(u: &VectorField, s: u32) -> f64 {
    u.components()
        .iter()
        .map(|c| sobolev_norm(c, s).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn vector_seminorm(u: &VectorField, k: u32) -> f64 {
    u.components()
        .iter()
        .map(|c| seminorm(c, k).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Quadrature L² norm.
pub fn l2_norm(f: &ScalarField) -> f64 {
    (f.data().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume()).sqrt()
}

pub fn linf_norm(f: &ScalarField) -> f64 {
    f.max_abs()
}

/// Multi-indices of total order `k` in `dim` variables with their multinomial
/// multiplicities `k!/α!`.
pub fn multi_indices(dim: usize, k: usize) -> Vec<([usize; 3], f64)> {
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let mut out = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let c = k - a - b;
            let idx = [a, b, c];
            if idx[dim..].iter().any(|&v| v != 0) {
                continue;
            }
            out.push((idx, fact(k) / (fact(a) * fact(b) * fact(c))));
        }
    }
    out
}

/// `|w ∇^k u|_2` with the Frobenius tensor norm over ordered index tuples.
pub fn weighted_seminorm(w: &ScalarField, u: &VectorField, k: usize) -> Result<f64, FieldError> {
    if *w.grid() != *u.grid() {
        return Err(FieldError::GridMismatch);
    }
    if k > super::MAX_DERIVATIVE_ORDER {
        return Err(FieldError::OrderTooHigh(k));
    }
    let dim = w.grid().dim();
    let dv = w.grid().cell_volume();
    let mut acc = 0.0;
    for c in u.components() {
        let spec = c.spectrum();
        for (idx, mult) in multi_indices(dim, k) {
            let d = spec.derivative(&idx[..dim])?;
            let s: f64 = d
                .data()
                .iter()
                .zip(w.data())
                .map(|(x, wt)| (wt * x).powi(2))
                .sum();
            acc += mult * s * dv;
        }
    }
    Ok(acc.sqrt())
}

/// Norm bundle for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `‖·‖_s` for `s = 0..=3`.
    pub h_norms: [f64; 4],
    /// `|D^k ·|_2` for `k = 1..=3`.
    pub seminorms: [f64; 3],
    /// `|w ∇^k u|_2` for `k = 2..=4`; empty for scalar reports.
    pub weighted: Vec<f64>,
    pub linf: f64,
}

impl NormReport {
    pub fn scalar(f: &ScalarField) -> Self {
        NormReport {
            h_norms: [0, 1, 2, 3].map(|s| sobolev_norm(f, s)),
            seminorms: [1, 2, 3].map(|k| seminorm(f, k)),
            weighted: Vec::new(),
            linf: linf_norm(f),
        }
    }

    pub fn vector(u: &VectorField, weight: Option<&ScalarField>) -> Result<Self, FieldError> {
        let weighted = match weight {
            Some(w) => (2..=4)
                .map(|k| weighted_seminorm(w, u, k))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(NormReport {
            h_norms: [0, 1, 2, 3].map(|s| vector_sobolev_norm(u, s)),
            seminorms: [1, 2, 3].map(|k| vector_seminorm(u, k)),
            weighted,
            linf: u.max_abs(),
        })
    }
}
