//! Admissible parameter region and derived constants.
//!
//! The pressure law is `P = A ρ^γ`, the viscosities are `μ = α ρ^δ1` and
//! `λ = β ρ^δ2`. Existence theory holds on the region
//!
//! ```text
//! γ > 1,  α > 0,  δ2 > δ1 > 1,  δ2 ≥ (5/2)δ1 − 3/2,  min{δ1, γ} ≤ 3
//! ```
//!
//! and, when `β < 0`, the initial density must satisfy
//! `ρ0^(δ2−δ1) ≤ −α/(3β)` so that `2μ + 3λ ≥ 0` near `t = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::ScalarField;

/// One inequality of the admissible region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Finite,
    PressureCoefficientPositive,
    GammaAboveOne,
    AlphaPositive,
    Delta2AboveDelta1,
    Delta1AboveOne,
    Delta2LowerBound,
    MinDeltaGammaAtMostThree,
}

impl Constraint {
    /// Checked in this order; the first failure is reported.
    pub const ORDER: [Constraint; 8] = [
        Constraint::Finite,
        Constraint::PressureCoefficientPositive,
        Constraint::GammaAboveOne,
        Constraint::AlphaPositive,
        Constraint::Delta2AboveDelta1,
        Constraint::Delta1AboveOne,
        Constraint::Delta2LowerBound,
        Constraint::MinDeltaGammaAtMostThree,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            Constraint::Finite => "all constants finite",
            Constraint::PressureCoefficientPositive => "A > 0",
            Constraint::GammaAboveOne => "γ > 1",
            Constraint::AlphaPositive => "α > 0",
            Constraint::Delta2AboveDelta1 => "δ2 > δ1",
            Constraint::Delta1AboveOne => "δ1 > 1",
            Constraint::Delta2LowerBound => "δ2 ≥ (5/2)δ1 − 3/2",
            Constraint::MinDeltaGammaAtMostThree => "min{δ1, γ} ≤ 3",
        }
    }

    /// Signed slack of the inequality (`≥ 0` when satisfied, strict ones need `> 0`).
    pub fn margin(self, raw: &RawParams) -> f64 {
        match self {
            Constraint::Finite => {
                if raw.as_array().iter().all(|v| v.is_finite()) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Constraint::PressureCoefficientPositive => raw.a,
            Constraint::GammaAboveOne => raw.gamma - 1.0,
            Constraint::AlphaPositive => raw.alpha,
            Constraint::Delta2AboveDelta1 => raw.delta2 - raw.delta1,
            Constraint::Delta1AboveOne => raw.delta1 - 1.0,
            // 2δ2 − (5δ1 − 3): same sign as δ2 − (5/2 δ1 − 3/2), fewer roundings.
            Constraint::Delta2LowerBound => 2.0 * raw.delta2 - (5.0 * raw.delta1 - 3.0),
            Constraint::MinDeltaGammaAtMostThree => 3.0 - raw.delta1.min(raw.gamma),
        }
    }

    fn strict(self) -> bool {
        !matches!(
            self,
            Constraint::Finite
                | Constraint::Delta2LowerBound
                | Constraint::MinDeltaGammaAtMostThree
        )
    }

    pub fn holds(self, raw: &RawParams) -> bool {
        let m = self.margin(raw);
        if self.strict() {
            m > 0.0
        } else {
            m >= 0.0
        }
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter constraint violated: {constraint} (margin {margin:e})")]
    Violated { constraint: Constraint, margin: f64 },
}

impl ParamError {
    pub fn constraint(&self) -> Constraint {
        match self {
            ParamError::Violated { constraint, .. } => *constraint,
        }
    }
}

/// The six model constants as supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl RawParams {
    pub fn new(a: f64, gamma: f64, alpha: f64, beta: f64, delta1: f64, delta2: f64) -> Self {
        RawParams {
            a,
            gamma,
            alpha,
            beta,
            delta1,
            delta2,
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [
            self.a,
            self.gamma,
            self.alpha,
            self.beta,
            self.delta1,
            self.delta2,
        ]
    }
}

/// Validated model constants with the derived quantities used by the
/// reformulated system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    #[serde(rename = "A")]
    pub a: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Symmetrizer weight `(γ−1)²/(4Aγ)`.
    pub a1: f64,
    /// Exponent ratio `(δ2−δ1)/(δ1−1)`.
    pub m: f64,
    /// `(−α/(3β))^(1/(δ2−δ1))` when `β < 0`.
    pub a2_density_cap: Option<f64>,
}

/// Check the admissible region and compute derived constants.
pub fn validate_params(raw: RawParams) -> Result<FluidParams, ParamError> {
    for c in Constraint::ORDER {
        if !c.holds(&raw) {
            return Err(ParamError::Violated {
                constraint: c,
                margin: c.margin(&raw),
            });
        }
    }
    let RawParams {
        a,
        gamma,
        alpha,
        beta,
        delta1,
        delta2,
    } = raw;
    let a1 = (gamma - 1.0) * (gamma - 1.0) / (4.0 * a * gamma);
    let m = (delta2 - delta1) / (delta1 - 1.0);
    assert!(
        m >= 1.5 * (1.0 - 8.0 * f64::EPSILON),
        "m = {m} below 3/2 on admissible input"
    );
    let a2_density_cap =
        (beta < 0.0).then(|| (-alpha / (3.0 * beta)).powf(1.0 / (delta2 - delta1)));
    Ok(FluidParams {
        a,
        gamma,
        alpha,
        beta,
        delta1,
        delta2,
        a1,
        m,
        a2_density_cap,
    })
}

impl FluidParams {
    pub fn raw(&self) -> RawParams {
        RawParams::new(
            self.a,
            self.gamma,
            self.alpha,
            self.beta,
            self.delta1,
            self.delta2,
        )
    }

    /// `2Aγ/(γ−1)`, the pressure coefficient of the velocity equation.
    pub fn pressure_factor(&self) -> f64 {
        2.0 * self.a * self.gamma / (self.gamma - 1.0)
    }

    /// Sound speed per unit `φ`: `c = sqrt(Aγ) φ`.
    pub fn sound_speed_factor(&self) -> f64 {
        (self.a * self.gamma).sqrt()
    }

    /// `α + β s` where `s = ϕ^{2m}`.
    pub fn bulk_coefficient(&self, vphi_pow_2m: f64) -> f64 {
        self.alpha + self.beta * vphi_pow_2m
    }

    /// Exponent mapping `ϕ` back to density, `2/(δ1−1)`.
    pub fn density_exponent_vphi(&self) -> f64 {
        2.0 / (self.delta1 - 1.0)
    }

    /// Exponent mapping `φ` back to density, `2/(γ−1)`.
    pub fn density_exponent_phi(&self) -> f64 {
        2.0 / (self.gamma - 1.0)
    }
}

/// Outcome of the vacuum-compatibility check on an initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub pass: bool,
    /// Grid minimum of `α + β ϕ0^{2m}`.
    pub margin: f64,
    /// Flat index of the cell attaining the margin.
    pub margin_index: usize,
    pub max_density: f64,
    /// Flat index of the densest cell (the maximal violator on failure).
    pub max_index: usize,
    pub density_cap: Option<f64>,
}

/// Verify the `β < 0` density cap on `rho0` and report the bulk-coefficient margin.
pub fn check_initial_compatibility(
    params: &FluidParams,
    rho0: &ScalarField,
) -> CompatibilityReport {
    let data = rho0.data();
    let p = params.delta2 - params.delta1;
    let mut margin = f64::INFINITY;
    let mut margin_index = 0;
    let mut max_density = f64::NEG_INFINITY;
    let mut max_index = 0;
    for (i, &r) in data.iter().enumerate() {
        // ϕ^{2m} = ρ^{(δ1−1)m} = ρ^{δ2−δ1}
        let s = crate::operators::pow_nonneg(r, p);
        let c = params.bulk_coefficient(s);
        if c < margin {
            margin = c;
            margin_index = i;
        }
        if r > max_density {
            max_density = r;
            max_index = i;
        }
    }
    let pass = match params.a2_density_cap {
        Some(cap) => max_density <= cap,
        None => true,
    };
    CompatibilityReport {
        pass,
        margin,
        margin_index,
        max_density,
        max_index,
        density_cap: params.a2_density_cap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    #[test]
    fn rejects_delta2_lower_bound() {
        let err = validate_params(RawParams::new(1.0, 2.0, 1.0, 1.0, 2.0, 3.0)).unwrap_err();
        assert_eq!(err.constraint(), Constraint::Delta2LowerBound);
        // 2·3 − (5·2 − 3) = −1, i.e. 3 < 3.5
        assert_eq!(
            Constraint::Delta2LowerBound.margin(&RawParams::new(1.0, 2.0, 1.0, 1.0, 2.0, 3.0)),
            -1.0
        );
    }

    #[test]
    fn accepts_negative_beta_and_derives_constants() {
        let p = validate_params(RawParams::new(1.0, 2.0, 1.0, -0.1, 1.5, 2.5)).unwrap();
        assert_eq!(p.a1, 0.125);
        assert_eq!(p.m, 2.0);
        let cap = p.a2_density_cap.unwrap();
        assert!((cap - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_gamma_one() {
        let err = validate_params(RawParams::new(1.0, 1.0, 1.0, 0.0, 2.0, 3.5)).unwrap_err();
        assert_eq!(err.constraint(), Constraint::GammaAboveOne);
    }

    #[test]
    fn rejects_non_finite_first() {
        let err = validate_params(RawParams::new(f64::NAN, 1.0, -1.0, 0.0, 2.0, 3.5)).unwrap_err();
        assert_eq!(err.constraint(), Constraint::Finite);
    }

    #[test]
    fn cap_absent_for_nonnegative_beta() {
        let p = validate_params(RawParams::new(1.0, 2.0, 1.0, 0.0, 1.5, 2.5)).unwrap();
        assert!(p.a2_density_cap.is_none());
    }

    fn compat_params(beta: f64) -> FluidParams {
        // δ2 − δ1 = 1
        validate_params(RawParams::new(1.0, 2.0, 1.0, beta, 1.5, 2.5)).unwrap()
    }

    #[test]
    fn compatibility_nonnegative_beta_always_passes() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let rho = ScalarField::from_fn(&g, |x| 5.0 + x[0]);
        let r = check_initial_compatibility(&compat_params(0.5), &rho);
        assert!(r.pass);
        assert!(r.margin >= 1.0);
    }

    #[test]
    fn compatibility_negative_beta_under_and_over_cap() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let p = compat_params(-1.0);
        let mut rho = ScalarField::zeros(&g);
        rho.data_mut()[3] = 0.3;
        let r = check_initial_compatibility(&p, &rho);
        assert!(r.pass);
        assert!((r.margin - 0.7).abs() < 1e-15);
        assert_eq!(r.margin_index, 3);

        rho.data_mut()[7] = 0.5;
        let r = check_initial_compatibility(&p, &rho);
        assert!(!r.pass);
        assert_eq!(r.max_index, 7);
    }
}
