//! Driving-volatility features and crash-propensity choice models.
//!
//! The pipeline runs from raw 10 Hz kinematic traces to volatility indices
//! ([`kinematics`]), through a three-outcome (baseline, near-crash, crash)
//! logit family with random and scale heterogeneity ([`model`],
//! [`estimation`]), to marginal effects and scenario forecasts
//! ([`inference`]). [`synthetic`] generates data from the same model for
//! testing, and [`cli`] wires everything into the `volatix` binary.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod kinematics;
pub mod manifest;
pub mod model;
pub mod outcome;
pub mod repro;
pub mod synthetic;

pub use error::{Error, Result};
pub use outcome::Outcome;
