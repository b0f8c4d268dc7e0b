//! Choice data, coefficient layouts and the per-event coefficient
//! construction shared by every model class.
//!
//! For one event and one draw, the coefficient vector is
//!
//! ```text
//! σ   = exp(-τ²/2 + θ·z + τ·ε0)
//! β_i = σ·β + (κ + (1 - κ)·σ)·(ω ⊙ η)
//! ```
//!
//! which collapses to MNL (σ = 1, ω = 0), RP-MNL (σ = 1), S-MNL and HS-MNL
//! (ω = 0), GMNL-I (κ = 1) and GMNL-II (κ = 0).

mod dataset;
mod params;
mod spec;

pub use dataset::{AttributeRow, AttributeTable, ChoiceDataset, CovariatePositions, EventRecord};
pub use params::{logistic, logit, parameter_names, ParamGroup, ParamIndex, ParameterSet};
pub use spec::{
    Coefficient, CoefficientKind, CoefficientLayout, DrawScheme, ModelClass, ModelSpec, RandomSlot,
    CONSTANT, DEFAULT_DRAWS, DEFAULT_GRADIENT_TOLERANCE, DEFAULT_HALTON_BURN, DEFAULT_MAX_ITERATIONS,
};

use crate::error::{Error, Result};

/// Log-normal scale with unit mean when `θ·z = 0`.
pub fn scale_factor(theta: &[f64], z: &[f64], tau: f64, eps0: f64) -> Result<f64> {
    if theta.len() != z.len() {
        return Err(Error::param(format!(
            "theta has {} entries but z has {}",
            theta.len(),
            z.len()
        )));
    }
    if !tau.is_finite() || tau < 0.0 || !eps0.is_finite() {
        return Err(Error::param(format!("tau {tau} / eps0 {eps0} invalid")));
    }
    let tz = dot(theta, z);
    if !tz.is_finite() {
        return Err(Error::param("non-finite θ·z"));
    }
    Ok(scale_factor_unchecked(tz, tau, eps0))
}

#[inline]
pub(crate) fn scale_factor_unchecked(theta_z: f64, tau: f64, eps0: f64) -> f64 {
    (-0.5 * tau * tau + theta_z + tau * eps0).exp()
}

/// `σ·β + (κ + (1 - κ)·σ)·w` where `w` is already `ω ⊙ η`.
pub fn blend_coefficients(beta: &[f64], w_draw: &[f64], sigma: f64, kappa: f64) -> Result<Vec<f64>> {
    if beta.len() != w_draw.len() {
        return Err(Error::param(format!(
            "beta has {} entries but w has {}",
            beta.len(),
            w_draw.len()
        )));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::param(format!("kappa {kappa} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("scale {sigma} must be positive")));
    }
    let mix = kappa + (1.0 - kappa) * sigma;
    Ok(beta.iter().zip(w_draw).map(|(b, w)| sigma * b + mix * w).collect())
}

/// Utilities in outcome order (baseline, near-crash, crash).
pub fn utilities(beta_crash: &[f64], x_crash: &[f64], beta_nearcrash: &[f64], x_nearcrash: &[f64]) -> Result<[f64; 3]> {
    for (what, b, x) in [("crash", beta_crash, x_crash), ("near-crash", beta_nearcrash, x_nearcrash)] {
        if b.len() != x.len() {
            return Err(Error::layout(format!(
                "{what} utility: {} coefficients vs {} covariates",
                b.len(),
                x.len()
            )));
        }
        if x.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::layout(format!("{what} utility has a non-finite input")));
        }
    }
    Ok([0.0, dot(beta_nearcrash, x_nearcrash), dot(beta_crash, x_crash)])
}

/// Softmax over the three utilities, max-shifted.
#[inline]
pub fn choice_probabilities(v: [f64; 3]) -> [f64; 3] {
    let m = v[0].max(v[1]).max(v[2]);
    let e = [(v[0] - m).exp(), (v[1] - m).exp(), (v[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
