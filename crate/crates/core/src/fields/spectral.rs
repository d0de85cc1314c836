//! Fourier transforms on the periodic box.
//!
//! Coefficients are normalized so that `f(x) = Σ_k c_k e^{i k·(x - x0)}` with
//! `x0` the lower box corner. FFT plans are cached per length.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{FieldError, Grid, ScalarField, VectorField};

pub const MAX_DERIVATIVE_ORDER: usize = 4;

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let (fwd, inv) = plans(n);
    let fft = if inverse { inv } else { fwd };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = n * stride;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    data[base + j * stride] = *l;
                }
            }
        }
    }
}

/// Signed integer wavenumber for index `j`; the Nyquist index maps to `n/2`.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Fourier coefficients of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn forward(f: &ScalarField) -> Spectrum {
        let grid = *f.grid();
        let mut coeffs: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut coeffs, grid.n(), grid.dim(), false);
        let scale = 1.0 / grid.len() as f64;
        for c in &mut coeffs {
            *c *= scale;
        }
        Spectrum { grid, coeffs }
    }

    /// Wrap coefficients laid out like [`Spectrum::forward`] output.
    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Spectrum {
        assert_eq!(coeffs.len(), grid.len(), "coefficient count");
        Spectrum {
            grid: *grid,
            coeffs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Physical wavevector of mode `flat`, with a flag per axis marking Nyquist.
    pub fn wavevector(&self, flat: usize) -> ([f64; 3], [bool; 3]) {
        let n = self.grid.n();
        let idx = self.grid.unflatten(flat);
        let k0 = 2.0 * std::f64::consts::PI / self.grid.box_length();
        let mut k = [0.0; 3];
        let mut nyq = [false; 3];
        for a in 0..self.grid.dim() {
            k[a] = k0 * signed_index(idx[a], n) as f64;
            nyq[a] = idx[a] == n / 2;
        }
        (k, nyq)
    }

    /// Inverse transform; the imaginary residue is discarded.
    pub fn to_field(&self) -> ScalarField {
        let mut buf = self.coeffs.clone();
        fft_nd(&mut buf, self.grid.n(), self.grid.dim(), true);
        ScalarField::from_vec(&self.grid, buf.iter().map(|c| c.re).collect())
            .unwrap_or_else(|_| ScalarField::constant(&self.grid, f64::NAN))
    }

    /// Apply a multiplier `m(k, nyquist_flags)` and transform back.
    pub fn apply(&self, m: impl Fn(&[f64; 3], &[bool; 3]) -> Complex64) -> ScalarField {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let (k, nyq) = self.wavevector(i);
            *c *= m(&k, &nyq);
        }
        out.to_field()
    }

    pub fn derivative(&self, order: &[usize]) -> Result<ScalarField, FieldError> {
        let dim = self.grid.dim();
        if order.len() != dim {
            return Err(FieldError::OrderDimension {
                got: order.len(),
                dim,
            });
        }
        let total: usize = order.iter().sum();
        if total > MAX_DERIVATIVE_ORDER {
            return Err(FieldError::OrderTooHigh(total));
        }
        Ok(self.apply(|k, nyq| {
            let mut m = Complex64::new(1.0, 0.0);
            for a in 0..dim {
                let o = order[a];
                if o == 0 {
                    continue;
                }
                if nyq[a] && o % 2 == 1 {
                    return Complex64::default();
                }
                m *= Complex64::new(0.0, k[a]).powu(o as u32);
            }
            m
        }))
    }

    pub fn gradient(&self) -> VectorField {
        let dim = self.grid.dim();
        let comps = (0..dim)
            .map(|a| {
                self.apply(|k, nyq| {
                    if nyq[a] {
                        Complex64::default()
                    } else {
                        Complex64::new(0.0, k[a])
                    }
                })
            })
            .collect();
        VectorField::from_components(comps).expect("gradient has dim components")
    }

    pub fn laplacian(&self) -> ScalarField {
        self.apply(|k, _| Complex64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0))
    }

    /// Zero every mode with some `|j_a| > n/3`.
    pub fn dealias(&mut self) {
        let n = self.grid.n();
        let cut = (n / 3) as i64;
        let dim = self.grid.dim();
        for i in 0..self.coeffs.len() {
            let idx = self.grid.unflatten(i);
            if (0..dim).any(|a| signed_index(idx[a], n).abs() > cut) {
                self.coeffs[i] = Complex64::default();
            }
        }
    }

    /// Trigonometric interpolant at an arbitrary point. The Nyquist modes are
    /// taken with their real-symmetric extension.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let x0 = -0.5 * self.grid.box_length();
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let (k, nyq) = self.wavevector(i);
            let mut term = *c;
            for a in 0..dim {
                let th = k[a] * (x[a] - x0);
                if nyq[a] {
                    term *= th.cos();
                } else {
                    term *= Complex64::new(th.cos(), th.sin());
                }
            }
            acc += term.re;
        }
        acc
    }

    /// Spectral interpolation onto a finer grid of the same box.
    pub fn prolong(&self, fine: &Grid) -> ScalarField {
        ScalarField::from_fn(fine, |x| self.evaluate(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn derivative_of_sine_is_exact() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin());
        let d = f.derivative(&[1]).unwrap();
        let expect = ScalarField::from_fn(&g, |x| 3.0 * (3.0 * x[0]).cos());
        assert!(d.sub(&expect).max_abs() < 1e-12);
        let d4 = f.derivative(&[4]).unwrap();
        assert!(d4.sub(&f.scaled(81.0)).max_abs() < 1e-10);
    }

    #[test]
    fn mixed_derivative_in_3d() {
        let g = Grid::new(3, 8, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].sin() * (2.0 * x[1]).cos() * x[2].sin());
        let d = f.derivative(&[1, 1, 2]).unwrap();
        let expect =
            ScalarField::from_fn(&g, |x| x[0].cos() * 2.0 * (2.0 * x[1]).sin() * x[2].sin());
        assert!(d.sub(&expect).max_abs() < 1e-12);
        assert!(f.derivative(&[2, 2, 1]).is_err());
        assert!(f.derivative(&[1, 1]).is_err());
    }

    #[test]
    fn round_trip_and_evaluate() {
        let g = Grid::new(2, 16, 3.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| (x[0] * 2.0 * PI / 3.0).cos() + 0.3 * x[1].sin());
        let s = f.spectrum();
        assert!(s.to_field().sub(&f).max_abs() < 1e-13);
        let p = g.point(37);
        assert!((s.evaluate(&p[..2]) - f.data()[37]).abs() < 1e-12);
    }

    #[test]
    fn dealias_removes_high_modes() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].sin() + (12.0 * x[0]).cos());
        let d = f.dealiased();
        let expect = ScalarField::from_fn(&g, |x| x[0].sin());
        assert!(d.sub(&expect).max_abs() < 1e-12);
    }
}
