//! Assembly of the Poisson problem and the linear solvers.

mod assembly;
mod cg;

use std::fmt;

use sprs::CsMat;

pub use assembly::{assemble, element_load, element_stiffness, error_norms, ASSEMBLY_EXTRA_POINTS, ERROR_EXTRA_POINTS};
pub use cg::{solve, solve_constrained, solve_unconstrained, spmv};

/// Summary of one linear solve. Residuals are recomputed after the solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `|b - A x| / |b|`, projected onto the constraint kernel when constrained.
    pub relative_residual: f64,
    /// `max |C x|`, zero without constraints.
    pub constraint_residual: f64,
    pub seconds: f64,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, relative residual {:.3e}, constraint residual {:.3e}",
            self.iterations, self.relative_residual, self.constraint_residual
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    /// Tolerance of the inner solve used by the projection.
    pub inner_tol: f64,
    /// Defaults to `40 sqrt(N)`.
    pub max_iter: Option<usize>,
    /// Largest acceptable `max |C x|`.
    pub constraint_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            inner_tol: 1e-14,
            max_iter: None,
            constraint_tol: 1e-9,
        }
    }
}

impl SolverSettings {
    pub fn max_iterations(&self, n: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| ((40.0 * (n as f64).sqrt()).ceil() as usize).max(1))
    }
}

/// A symmetric system over the unknowns with optional linear constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsMat<f64>,
    pub rhs: Vec<f64>,
    pub constraint: Option<CsMat<f64>>,
    /// A constraint row known to depend on the others; skipped by the projection.
    pub redundant_row: Option<usize>,
    /// Overlapping unknown sets, one per element, for the block preconditioner.
    /// Jacobi is used when absent.
    pub blocks: Option<Vec<Vec<usize>>>,
    pub settings: SolverSettings,
}

impl SparseSystem {
    pub fn new(matrix: CsMat<f64>, rhs: Vec<f64>) -> Self {
        Self {
            matrix,
            rhs,
            constraint: None,
            redundant_row: None,
            blocks: None,
            settings: SolverSettings::default(),
        }
    }

    pub fn with_constraint(mut self, c: CsMat<f64>, redundant_row: Option<usize>) -> Self {
        self.constraint = Some(c);
        self.redundant_row = redundant_row;
        self
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let a = &self.matrix;
        let t = a.transpose_view().to_csr();
        let diff = a - &t;
        let scale = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        diff.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    }
}
