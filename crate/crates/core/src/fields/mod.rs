//! Periodic collocation grids and sampled fields.
//!
//! The box is `[-L/2, L/2)^dim` with `n` points per axis, stored row-major
//! with the last axis fastest. Spectral calculus lives in [`spectral`], the
//! discrete Sobolev and weighted norms in [`norms`], and the binary snapshot
//! format in [`snapshot`].

pub mod norms;
pub mod snapshot;
pub mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use norms::{
    l2_norm, linf_norm, seminorm, sobolev_norm, vector_seminorm, vector_sobolev_norm,
    weighted_seminorm, NormReport,
};
pub use spectral::{Spectrum, MAX_DERIVATIVE_ORDER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("derivative order {0} exceeds the supported maximum of 4")]
    OrderTooHigh(usize),
    #[error("multi-index has {got} entries, grid dimension is {dim}")]
    OrderDimension { got: usize, dim: usize },
    #[error("sample count {got} does not match grid size {expected}")]
    SampleCount { got: usize, expected: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("Sobolev index {0} outside 0..=3")]
    SobolevIndex(usize),
}

/// Isotropic periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, box_length: f64) -> Result<Self, FieldError> {
        if !(1..=3).contains(&dim) {
            return Err(FieldError::InvalidGrid(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::InvalidGrid(format!(
                "n = {n} must be a power of two ≥ 8"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "box length {box_length} must be positive"
            )));
        }
        Ok(Grid { dim, n, box_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Number of collocation points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Per-axis indices of a flat index.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Physical coordinates of a collocation point (unused axes are zero).
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -0.5 * self.box_length + idx[a] as f64 * h;
        }
        x
    }

    /// Grid with `factor` times as many points per axis on the same box.
    pub fn refined(&self, factor: usize) -> Result<Grid, FieldError> {
        Grid::new(self.dim, self.n * factor, self.box_length)
    }
}

/// Real scalar samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid: *grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField {
            grid: *grid,
            data: vec![c; grid.len()],
        }
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != grid.len() {
            return Err(FieldError::SampleCount {
                got: data.len(),
                expected: grid.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(ScalarField { grid: *grid, data })
    }

    /// Samples `f` at every collocation point; `f` sees `dim` coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                f(&x[..grid.dim()])
            })
            .collect();
        ScalarField { grid: *grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature integral over the box.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::forward(self)
    }

    /// Spectral partial derivative for a multi-index with `|order| ≤ 4`.
    pub fn derivative(&self, order: &[usize]) -> Result<ScalarField, FieldError> {
        self.spectrum().derivative(order)
    }

    pub fn gradient(&self) -> VectorField {
        self.spectrum().gradient()
    }

    pub fn laplacian(&self) -> ScalarField {
        self.spectrum().laplacian()
    }

    /// 2/3-rule truncation.
    pub fn dealiased(&self) -> ScalarField {
        let mut s = self.spectrum();
        s.dealias();
        s.to_field()
    }
}

/// `dim`-component vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            comps: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_components(comps: Vec<ScalarField>) -> Result<Self, FieldError> {
        let Some(first) = comps.first() else {
            return Err(FieldError::SampleCount {
                got: 0,
                expected: 1,
            });
        };
        let grid = *first.grid();
        if comps.len() != grid.dim() {
            return Err(FieldError::SampleCount {
                got: comps.len(),
                expected: grid.dim(),
            });
        }
        if comps.iter().any(|c| *c.grid() != grid) {
            return Err(FieldError::GridMismatch);
        }
        Ok(VectorField { comps })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], usize) -> f64) -> Self {
        VectorField {
            comps: (0..grid.dim())
                .map(|c| ScalarField::from_fn(grid, |x| f(x, c)))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.comps[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.comps
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(f).collect(),
        }
    }

    pub fn zip_components(
        &self,
        other: &VectorField,
        f: impl Fn(&ScalarField, &ScalarField) -> ScalarField,
    ) -> VectorField {
        VectorField {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        self.map_components(|f| f.scaled(c))
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        self.zip_components(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.zip_components(other, |a, b| a.sub(b))
    }

    /// Multiply every component pointwise by a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> VectorField {
        self.map_components(|f| f.mul(s))
    }

    pub fn axpy(&mut self, c: f64, other: &VectorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(c, b);
        }
    }

    pub fn dot(&self, other: &VectorField) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid());
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for ((o, &x), &y) in out.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
                *o += x * y;
            }
        }
        out
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        self.dot(self).map(f64::sqrt)
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max()
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(ScalarField::is_finite)
    }

    pub fn divergence(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid());
        for (a, c) in self.comps.iter().enumerate() {
            let mut order = [0usize; 3];
            order[a] = 1;
            let d = c
                .derivative(&order[..self.dim()])
                .expect("first-order derivative is always supported");
            out.axpy(1.0, &d);
        }
        out
    }

    pub fn laplacian(&self) -> VectorField {
        self.map_components(ScalarField::laplacian)
    }

    /// `∇(div u)`.
    pub fn grad_div(&self) -> VectorField {
        self.divergence().gradient()
    }

    /// `(w·∇) self`, component by component.
    pub fn advected_by(&self, w: &VectorField) -> VectorField {
        self.map_components(|c| w.dot(&c.gradient()))
    }

    /// Jacobian entries `∂_j u_i`, indexed `[i][j]`.
    pub fn jacobian(&self) -> Vec<Vec<ScalarField>> {
        self.comps.iter().map(|c| c.gradient().comps).collect()
    }

    pub fn dealiased(&self) -> VectorField {
        self.map_components(ScalarField::dealiased)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(1, 6, 1.0).is_err());
        assert!(Grid::new(1, 12, 1.0).is_err());
        assert!(Grid::new(4, 8, 1.0).is_err());
        assert!(Grid::new(2, 8, 0.0).is_err());
        assert!(Grid::new(3, 8, 2.0).is_ok());
    }

    #[test]
    fn points_are_row_major_centered() {
        let g = Grid::new(2, 8, 8.0).unwrap();
        assert_eq!(g.point(0), [-4.0, -4.0, 0.0]);
        assert_eq!(g.point(1), [-4.0, -3.0, 0.0]);
        assert_eq!(g.point(8), [-3.0, -4.0, 0.0]);
    }

    #[test]
    fn from_vec_rejects_nan() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let mut v = vec![0.0; 8];
        v[5] = f64::NAN;
        assert_eq!(ScalarField::from_vec(&g, v), Err(FieldError::NonFinite(5)));
    }
}
