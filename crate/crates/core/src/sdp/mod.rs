//! Block-diagonal semidefinite feasibility problems with free variables.
//!
//! A problem asks for symmetric blocks `X_j ⪰ 0` and free variables `u` with
//!
//! ```text
//!   sum_j <A_ij, X_j> + sum_k B_ik u_k = b_i      for every row i.
//! ```
//!
//! Each `A_ij` is a sparse symmetric matrix given by its upper-triangular
//! entries: an entry `(p, q, c)` with `p < q` stands for `c` at both `(p, q)`
//! and `(q, p)`, so it contributes `2 c X_pq` to the row.

mod dump;
mod ipm;
mod linalg;
mod residual;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dump::{read_dump, write_dump, DumpError};
pub use ipm::{solve, InteriorPoint};
pub use linalg::{min_eigenvalue, symmetric_eigenvalues};
pub use residual::{residual_report, ResidualReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EqualityRow {
    pub gram: Vec<GramEntry>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl EqualityRow {
    /// Left-hand side at the given point.
    pub fn evaluate(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut acc = 0.0;
        for e in &self.gram {
            let x = blocks[e.block][(e.row, e.col)];
            acc += if e.row == e.col { e.coeff * x } else { 2.0 * e.coeff * x };
        }
        for &(k, c) in &self.free {
            acc += c * free[k];
        }
        acc
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub num_free: usize,
    pub rows: Vec<EqualityRow>,
    #[serde(default)]
    pub block_labels: Vec<String>,
    #[serde(default)]
    pub free_labels: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProblemError {
    #[error("problem has no PSD blocks")]
    NoBlocks,
    #[error("row {row}: entry ({r}, {c}) outside block {block} of dimension {dim}")]
    EntryOutOfRange { row: usize, block: usize, r: usize, c: usize, dim: usize },
    #[error("row {row}: free variable {var} out of range ({num_free} declared)")]
    FreeOutOfRange { row: usize, var: usize, num_free: usize },
    #[error("row {row}: non-finite coefficient")]
    NonFinite { row: usize },
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>, num_free: usize) -> Self {
        Self { block_dims, num_free, ..Default::default() }
    }

    pub fn add_row(&mut self, row: EqualityRow) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.block_dims.is_empty() {
            return Err(ProblemError::NoBlocks);
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(ProblemError::NonFinite { row: i });
            }
            for e in &row.gram {
                let dim = *self.block_dims.get(e.block).unwrap_or(&0);
                if e.row >= dim || e.col >= dim || e.row > e.col {
                    return Err(ProblemError::EntryOutOfRange { row: i, block: e.block, r: e.row, c: e.col, dim });
                }
                if !e.coeff.is_finite() {
                    return Err(ProblemError::NonFinite { row: i });
                }
            }
            for &(k, c) in &row.free {
                if k >= self.num_free {
                    return Err(ProblemError::FreeOutOfRange { row: i, var: k, num_free: self.num_free });
                }
                if !c.is_finite() {
                    return Err(ProblemError::NonFinite { row: i });
                }
            }
        }
        Ok(())
    }

    /// `b - A(X, u)` for every row.
    pub fn residuals(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs - r.evaluate(blocks, free)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Farkas-type certificate: `B^T y = 0`, `sum_i y_i A_ij ⪰ -w I` and
/// `b^T y < 0`. For any feasible point with `sum_j tr X_j <= trace_budget`
/// this yields `0 > b^T y + w * trace_budget`, which is `-violation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualWitness {
    pub y: Vec<f64>,
    pub violation: f64,
    pub trace_budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResiduals {
    pub primal_equality: f64,
    pub min_eigenvalues: Vec<f64>,
    /// Largest uniform diagonal slack `t` with `X_j - t I ⪰ 0` reached by the solver.
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub residuals: SolveResiduals,
    pub iterations: usize,
    pub witness: Option<DualWitness>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol_eq: f64,
    pub tol_psd: f64,
    pub max_iter: usize,
    /// Seeds the perturbed restart used after a numerical breakdown.
    pub seed: u64,
    /// Upper bound on `sum_j tr X_j`, as a multiple of `sum_j dim_j`.
    pub trace_factor: f64,
    /// Cap on the maximized diagonal slack.
    pub slack_cap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol_eq: 1e-8, tol_psd: 1e-8, max_iter: 200, seed: 0, trace_factor: 1e4, slack_cap: 1.0 }
    }
}

/// Pluggable back end; [`InteriorPoint`] is the built-in implementation and
/// external solvers can be adapted through the text dump format.
pub trait SdpBackend {
    fn solve(&self, problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, ProblemError>;
}
