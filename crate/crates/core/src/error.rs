use std::path::PathBuf;

use crate::solve::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("order {order} is not valid for the {family} family ({expected})")]
    OrderMismatch {
        family: &'static str,
        order: usize,
        expected: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("element {element} is degenerate (jacobian determinant {det:.3e})")]
    DegenerateElement { element: usize, det: f64 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("mesh validation failed: {0}")]
    InvalidMesh(String),
    #[error("reference element {family} m={order}: {message}")]
    Construction {
        family: &'static str,
        order: usize,
        message: String,
    },
    #[error("Newton iteration for {n}-point Gauss rule did not converge")]
    GaussNewton { n: usize },
    #[error("solver did not converge: {message} ({report})")]
    SolverFailed { message: String, report: SolveReport },
    #[error("interpolation constraint residual {residual:.3e} on element {element}")]
    InterpolationResidual { element: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
