//! Python bindings for meshes, spaces, convergence studies and the
//! reference-element checks.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ncquad::study::{self, ExactSolution, MeshKind, StudyConfig, StudyRow};
use ncquad::{DofMode, ElementKind, Family, GlobalSpace, QuadMesh, Rect};

fn err(e: ncquad::Error) -> PyErr {
    match e {
        ncquad::Error::InvalidArgument(_) | ncquad::Error::OrderMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn family(name: &str, variant: &str) -> PyResult<Family> {
    match (name, variant) {
        ("r", "standard") => Ok(Family::R),
        ("r", "tilde") => Ok(Family::R_TILDE),
        ("er", "standard") => Ok(Family::ER),
        ("rplus", "standard") => Ok(Family::RPLUS),
        _ => Err(PyValueError::new_err(format!("unknown family/variant {name}/{variant}"))),
    }
}

fn dof_mode(name: &str) -> PyResult<DofMode> {
    match name {
        "point" => Ok(DofMode::Point),
        "moment" => Ok(DofMode::Moment),
        _ => Err(PyValueError::new_err(format!("unknown dof mode {name}"))),
    }
}

/// A conforming quadrilateral mesh.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh(Arc<QuadMesh>);

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 2]>, quads: Vec<[usize; 4]>) -> PyResult<Self> {
        QuadMesh::new(vertices, quads).map(|m| Self(Arc::new(m))).map_err(err)
    }

    /// `n x n` squares on the unit square.
    #[staticmethod]
    fn uniform(n: usize) -> PyResult<Self> {
        ncquad::uniform_rect_mesh(n, Rect::UNIT).map(|m| Self(Arc::new(m))).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n, seed=0, amplitude=0.2))]
    fn perturbed(n: usize, seed: u64, amplitude: f64) -> PyResult<Self> {
        ncquad::perturbed_mesh(n, seed, amplitude).map(|m| Self(Arc::new(m))).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ncquad::mesh::io::load(path).map(|m| Self(Arc::new(m))).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ncquad::mesh::io::save(&self.0, path).map_err(err)
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.0.n_elements()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.0.n_edges()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 2]> {
        self.0.vertices().to_vec()
    }

    #[getter]
    fn quads(&self) -> Vec<[usize; 4]> {
        self.0.quads().to_vec()
    }

    fn h(&self) -> f64 {
        self.0.h()
    }

    fn __repr__(&self) -> String {
        format!("Mesh({} elements, {} vertices)", self.0.n_elements(), self.0.n_vertices())
    }
}

/// A global nonconforming space with homogeneous or free boundary values.
#[pyclass(name = "Space", frozen)]
struct PySpace(GlobalSpace);

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (mesh, family, order, dof_mode="point", variant="standard", homogeneous=true))]
    fn new(
        mesh: &PyMesh,
        family: &str,
        order: usize,
        dof_mode: &str,
        variant: &str,
        homogeneous: bool,
    ) -> PyResult<Self> {
        let kind = ElementKind::new(self::family(family, variant)?, order, self::dof_mode(dof_mode)?).map_err(err)?;
        GlobalSpace::new(mesh.0.clone(), kind, homogeneous).map(Self).map_err(err)
    }

    #[getter]
    fn n_free(&self) -> usize {
        self.0.n_free()
    }

    #[getter]
    fn n_global(&self) -> usize {
        self.0.n_global()
    }

    /// Unknowns minus the numerical rank of the constraints.
    fn dimension(&self) -> usize {
        self.0.kernel_dimension()
    }

    fn expected_dimension(&self) -> usize {
        ncquad::expected_dimension(&self.0)
    }

    fn constraint_rank(&self) -> usize {
        self.0.constraint_rank()
    }

    /// Solves the Poisson problem with the default manufactured solution and
    /// returns `(coefficients, l2_error, h1_error, iterations)`.
    fn solve_poisson(&self) -> PyResult<(Vec<f64>, f64, f64, usize)> {
        let (u, grad, f) = study::default_problem();
        let m = self.0.kind().order;
        let system = ncquad::assemble(&self.0, f, m + ncquad::solve::ASSEMBLY_EXTRA_POINTS).map_err(err)?;
        let (x, report) = ncquad::solve(&system).map_err(err)?;
        let (l2, h1) = ncquad::error_norms(&self.0, &x, u, grad, m + ncquad::solve::ERROR_EXTRA_POINTS).map_err(err)?;
        Ok((x, l2, h1, report.iterations))
    }

    /// Value and physical gradient of the function with coefficients `coeffs`
    /// at reference point `(xh, yh)` of `element`.
    fn evaluate(&self, coeffs: Vec<f64>, element: usize, xh: f64, yh: f64) -> PyResult<(f64, (f64, f64))> {
        if element >= self.0.mesh().n_elements() {
            return Err(PyValueError::new_err("element index out of range"));
        }
        let fe = self.0.function(coeffs).map_err(err)?;
        fe.evaluate(element, xh, yh).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Space({}, {} unknowns)", self.0.kind(), self.0.n_free())
    }
}

fn row_dict<'py>(py: Python<'py>, r: &StudyRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("level", r.level)?;
    d.set_item("l2_err", r.l2_err)?;
    d.set_item("l2_order", r.l2_order)?;
    d.set_item("h1_err", r.h1_err)?;
    d.set_item("h1_order", r.h1_order)?;
    d.set_item("ndof", r.ndof)?;
    d.set_item("iters", r.iters)?;
    d.set_item("seconds", r.seconds)?;
    Ok(d)
}

/// Convergence study on the unit square; one dict per level.
#[pyfunction]
#[pyo3(signature = (family, order, levels, variant="standard", dof_mode="point", mesh="uniform", seed=0, amplitude=0.2, solution="polynomial", interpolate=false))]
#[allow(clippy::too_many_arguments)]
fn run_study<'py>(
    py: Python<'py>,
    family: &str,
    order: usize,
    levels: usize,
    variant: &str,
    dof_mode: &str,
    mesh: &str,
    seed: u64,
    amplitude: f64,
    solution: &str,
    interpolate: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut c = StudyConfig::new(self::family(family, variant)?, order, levels);
    c.dof_mode = self::dof_mode(dof_mode)?;
    c.mesh = match mesh {
        "uniform" => MeshKind::Uniform,
        "perturbed" => MeshKind::Perturbed,
        _ => return Err(PyValueError::new_err(format!("unknown mesh kind {mesh}"))),
    };
    c.seed = seed;
    c.amplitude = amplitude;
    c.solution = match solution {
        "polynomial" => ExactSolution::Polynomial,
        "sinsin" => ExactSolution::SinSin,
        _ => return Err(PyValueError::new_err(format!("unknown solution {solution}"))),
    };
    let rows = if interpolate {
        py.detach(|| study::run_interpolation_study(&c)).map_err(err)?
    } else {
        py.detach(|| study::run_study(&c))
            .map_err(|f| PyRuntimeError::new_err(f.to_string()))?
    };
    rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Relation weights over the boundary point functionals.
#[pyfunction]
#[pyo3(signature = (family, order, variant="standard"))]
fn constraint_weights(family: &str, order: usize, variant: &str) -> PyResult<Vec<f64>> {
    ncquad::refelem::constraint_weights(self::family(family, variant)?, order).map_err(err)
}

/// `(name, passed, detail)` for every reference-element self check.
#[pyfunction]
fn verify_reference_elements() -> Vec<(String, bool, String)> {
    study::verify_reference_elements()
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect()
}

#[pymodule]
fn ncquad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(constraint_weights, m)?)?;
    m.add_function(wrap_pyfunction!(verify_reference_elements, m)?)?;
    Ok(())
}
