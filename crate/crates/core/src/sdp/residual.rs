use nalgebra::DMatrix;
use serde::Serialize;

use super::linalg::min_eigenvalue;
use super::SdpProblem;

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// `b_i - A_i(X, u)` per row.
    pub rows: Vec<f64>,
    pub max_abs: f64,
    pub min_eigenvalues: Vec<f64>,
}

impl ResidualReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn passes(&self, tol_eq: f64, tol_psd: f64) -> bool {
        self.max_abs <= tol_eq && self.min_eigenvalue() >= -tol_psd
    }
}

pub fn residual_report(problem: &SdpProblem, blocks: &[DMatrix<f64>], free: &[f64]) -> ResidualReport {
    let rows = problem.residuals(blocks, free);
    let max_abs = rows.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    ResidualReport { rows, max_abs, min_eigenvalues: blocks.iter().map(min_eigenvalue).collect() }
}
