//! Solver library for compressible Navier–Stokes with density-dependent
//! degenerate viscosity, posed in the variables `ϕ = ρ^{(δ1−1)/2}`,
//! `φ = ρ^{(γ−1)/2}` and `u` on a periodic box.

pub mod diagnostics;
pub mod fields;
pub mod fixedpoint;
pub mod linearized;
pub mod operators;
pub mod oracle;
pub mod params;
