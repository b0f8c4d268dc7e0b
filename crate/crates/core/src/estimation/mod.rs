//! Simulated maximum likelihood: draws, the simulated log-likelihood and its
//! gradient, the optimizer, covariance estimation and fit statistics.

pub mod covariance;
pub mod draws;
mod fit;
pub mod optimizer;
mod simulate;

pub use covariance::{CovarianceSource, Covariances};
pub use draws::{halton_sequence, DrawBlock, EventDraws};
pub use fit::{
    check_identification, fit, fit_with, DrawConfig, FitOptions, FitResult, ParameterEstimate, StartSummary,
};
pub use optimizer::{BfgsOptions, IterationRecord, Termination};
pub use simulate::{log_likelihood, simulated_probability, LoglikValue, Simulator, PROBABILITY_FLOOR};

use crate::error::{Error, Result};

/// AIC = 2k − 2LL and McFadden's pseudo-R² = 1 − LL/LL₀.
pub fn information_criteria(loglik: f64, loglik_null: f64, k: usize) -> Result<(f64, f64)> {
    if !loglik.is_finite() || !loglik_null.is_finite() {
        return Err(Error::param("log-likelihoods must be finite"));
    }
    if loglik_null == 0.0 {
        return Err(Error::param("null log-likelihood is zero; pseudo R² undefined"));
    }
    let aic = 2.0 * k as f64 - 2.0 * loglik;
    Ok((aic, 1.0 - loglik / loglik_null))
}

/// Log-likelihood of the model with only outcome-specific constants, which
/// reproduces the sample shares exactly: Σ n_j ln(n_j / N).
pub fn null_loglik(counts: [usize; 3]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / n as f64).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aic_and_pseudo_r2() {
        let (aic, r2) = information_criteria(-1095.77, -2000.0, 38).unwrap();
        assert_relative_eq!(aic, 2267.54, epsilon = 1e-9);
        assert_relative_eq!(r2, 1.0 - 1095.77 / 2000.0, epsilon = 1e-12);
        assert!(information_criteria(-1.0, 0.0, 1).is_err());
        assert!(information_criteria(f64::NAN, -1.0, 1).is_err());
    }

    #[test]
    fn null_loglik_matches_shares() {
        let ll = null_loglik([50, 30, 20]);
        let want = 50.0 * 0.5f64.ln() + 30.0 * 0.3f64.ln() + 20.0 * 0.2f64.ln();
        assert_relative_eq!(ll, want, epsilon = 1e-12);
        assert_eq!(null_loglik([10, 0, 0]), 0.0);
    }
}
