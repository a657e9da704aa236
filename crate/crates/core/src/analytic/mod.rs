//! Closed-form SLE left-passage probabilities and the degenerate elliptic
//! operator they satisfy.
//!
//! Two independent routes are provided: the hypergeometric formula
//! ([`schramm_lpp`]) and the normalized angular integral ([`lawler_lpp`]),
//! evaluated by series and by tanh-sinh quadrature respectively.

mod quadrature;
mod residual;
mod special;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quadrature::TanhSinh;
pub use residual::{pde_residual, ScalarField};
pub use special::{gamma_fn, hyp2f1_half};

/// Which sign of the drift coefficient β is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaConvention {
    /// β = 2(4/κ − 1), as written next to the divergence-form equation.
    Paper,
    /// β = 2 − 8/κ, the value for which the angular left-passage function
    /// solves `y·Δf + β·∂f/∂y = 0`.
    Matched,
}

impl BetaConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            BetaConvention::Paper => "paper",
            BetaConvention::Matched => "matched",
        }
    }
}

/// κ together with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaParams {
    pub kappa: f64,
    pub beta_paper: f64,
    pub beta_matched: f64,
    pub convention: BetaConvention,
}

impl KappaParams {
    pub fn new(kappa: f64, convention: BetaConvention) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 8.0) {
            return Err(Error::Domain(format!("kappa must lie in (0, 8), got {kappa}")));
        }
        Ok(Self {
            kappa,
            beta_paper: 2.0 * (4.0 / kappa - 1.0),
            beta_matched: 2.0 - 8.0 / kappa,
            convention,
        })
    }

    /// β under the active convention.
    pub fn beta(&self) -> f64 {
        match self.convention {
            BetaConvention::Paper => self.beta_paper,
            BetaConvention::Matched => self.beta_matched,
        }
    }

    /// Bessel order ν = (β − 1)/2.
    pub fn nu(&self) -> f64 {
        (self.beta() - 1.0) / 2.0
    }

    /// Bessel dimension β + 1 = 2ν + 2.
    pub fn dim_bessel(&self) -> f64 {
        self.beta() + 1.0
    }

    /// Exponent 8/κ − 2 of the angular density sin(θ)^{8/κ−2}.
    pub fn angular_exponent(&self) -> f64 {
        8.0 / self.kappa - 2.0
    }
}

/// Probability that chordal SLE_κ in the upper half-plane passes to the left
/// of `x + iy`, via the hypergeometric closed form.
pub fn schramm_lpp(params: &KappaParams, x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!(
            "schramm_lpp requires y > 0 and finite x, got ({x}, {y})"
        )));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let b = 4.0 / params.kappa;
    // Γ(4/κ) / (√π Γ((8−κ)/(2κ))), and (8−κ)/(2κ) = b − 1/2.
    let constant = gamma_fn(b)? / (PI.sqrt() * gamma_fn(b - 0.5)?);
    let w = x / y;
    let h = 0.5 + constant * w * hyp2f1_half(b, w)?;
    Ok(h.clamp(0.0, 1.0))
}

/// Left-passage probability as a function of the polar angle θ of the point,
/// from the normalized integral `(1/Z) ∫_θ^π sin(s)^{8/κ−2} ds`.
pub fn lawler_lpp(params: &KappaParams, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::Domain(format!("theta must lie in (0, π), got {theta}")));
    }
    if !(params.kappa > 0.0 && params.kappa < 8.0) {
        return Err(Error::Domain(format!(
            "kappa must lie in (0, 8) for an integrable density, got {}",
            params.kappa
        )));
    }
    let exponent = params.angular_exponent();
    let quad = TanhSinh::default();
    // All integrals are taken over sub-intervals of [0, π/2] with the only
    // possible singularity at 0, using sin(π − s) = sin(s).
    let piece = |lo: f64, hi: f64| quad.integrate(|s| s.sin().powf(exponent), lo, hi);
    let half = piece(0.0, FRAC_PI_2)?;
    let upper = if theta >= FRAC_PI_2 {
        piece(0.0, PI - theta)?
    } else {
        half + piece(theta, FRAC_PI_2)?
    };
    Ok((upper / (2.0 * half)).clamp(0.0, 1.0))
}
