//! Arbitrary-order nonconforming finite elements on quadrilateral meshes.
//!
//! Three families are provided: odd-order `R_m`, the enriched odd-order
//! `ER_m` with point or moment edge functionals, and even-order `R_m^+`.
//! [`study`] solves the Poisson problem on refined meshes and tabulates
//! error orders.

pub mod error;
pub mod legendre1d;
pub mod mesh;
pub mod refelem;
pub mod solve;
pub mod space;
pub mod study;

pub use error::{Error, Result};
pub use mesh::{perturbed_mesh, uniform_rect_mesh, QuadMesh, Rect};
pub use refelem::{reference_element, DofMode, ElementKind, Family, Poly2D, ReferenceElement};
pub use solve::{assemble, error_norms, solve, SolveReport, SolverSettings, SparseSystem};
pub use space::{expected_dimension, interpolate, FeFunction, GlobalSpace};
pub use study::{run_study, StudyConfig, StudyRow};
