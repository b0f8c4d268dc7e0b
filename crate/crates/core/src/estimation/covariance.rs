use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::simulate::Simulator;

/// Eigenvalues below this fraction of the largest mark a matrix as singular.
pub const SINGULAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    Hessian,
    Bhhh,
    Unavailable,
}

#[derive(Debug, Clone)]
pub struct Covariances {
    /// Inverse of the negative Hessian.
    pub hessian: Option<DMatrix<f64>>,
    /// Inverse outer product of per-event scores.
    pub bhhh: Option<DMatrix<f64>>,
    /// Sandwich H⁻¹ B H⁻¹.
    pub robust: Option<DMatrix<f64>>,
    /// The one reported as the primary covariance.
    pub source: CovarianceSource,
    pub notes: Vec<String>,
}

impl Covariances {
    pub fn primary(&self) -> Option<&DMatrix<f64>> {
        match self.source {
            CovarianceSource::Hessian => self.hessian.as_ref(),
            CovarianceSource::Bhhh => self.bhhh.as_ref(),
            CovarianceSource::Unavailable => None,
        }
    }

    /// Applies `v ↦ D v D` with `D = diag(d)` to every matrix.
    pub fn rescale(&mut self, d: &[f64]) {
        let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
        for m in [&mut self.hessian, &mut self.bhhh, &mut self.robust].into_iter().flatten() {
            *m = &dm * &*m * &dm;
        }
    }
}

/// Hessian of the log-likelihood by central differences of the analytic
/// gradient, symmetrized.
pub fn numerical_hessian(sim: &Simulator<'_>, free: &[f64]) -> DMatrix<f64> {
    let k = free.len();
    let mut h = DMatrix::zeros(k, k);
    let mut x = free.to_vec();
    for j in 0..k {
        let step = 1e-4 * free[j].abs().max(1.0);
        x[j] = free[j] + step;
        let (_, up) = sim.loglik_gradient(&x);
        x[j] = free[j] - step;
        let (_, down) = sim.loglik_gradient(&x);
        x[j] = free[j];
        for i in 0..k {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

pub fn outer_product_of_scores(scores: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(k, k);
    for s in scores {
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] += s[i] * s[j];
            }
        }
    }
    b
}

/// Inverse of a symmetric positive-definite matrix via its eigensystem, or
/// `None` when it is indefinite or numerically singular.
pub fn invert_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
    if !(max > 0.0) {
        return None;
    }
    if eig.eigenvalues.iter().any(|&l| l <= SINGULAR_RATIO * max) {
        return None;
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Hessian-based covariance with BHHH fallback; all three forms computed
/// when possible.
pub fn covariances(sim: &Simulator<'_>, free: &[f64]) -> Covariances {
    let k = free.len();
    let mut notes = Vec::new();
    let neg_h = -numerical_hessian(sim, free);
    let hessian = invert_pd(&neg_h);
    if hessian.is_none() {
        notes.push("negative Hessian is indefinite or singular".to_string());
    }
    let scores = sim.scores(free);
    let b = outer_product_of_scores(&scores, k);
    let bhhh = invert_pd(&b);
    if bhhh.is_none() {
        notes.push("score outer product is singular".to_string());
    }
    let robust = hessian.as_ref().map(|hi| hi * &b * hi);
    let source = if hessian.is_some() {
        CovarianceSource::Hessian
    } else if bhhh.is_some() {
        notes.push("standard errors from BHHH fallback".to_string());
        CovarianceSource::Bhhh
    } else {
        CovarianceSource::Unavailable
    };
    Covariances {
        hessian,
        bhhh,
        robust,
        source,
        notes,
    }
}

pub fn diag_sqrt(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, i)].max(0.0).sqrt()).collect()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
