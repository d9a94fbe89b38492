//! Convergence studies of the Poisson problem on refined meshes of the unit square.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mesh::{perturbed_mesh, uniform_rect_mesh, QuadMesh, Rect};
use crate::refelem::{
    build_reference_element, constraint_weights, constraint_weights_oracle, verify_relation, DofMode, ElementKind,
    Family,
};
use crate::solve::{assemble, error_norms, solve, SolverSettings, ASSEMBLY_EXTRA_POINTS, ERROR_EXTRA_POINTS};
use crate::space::{interpolate, GlobalSpace};

/// `u = 16 (x - x^6)(y - y^2)`.
pub fn default_u(x: f64, y: f64) -> f64 {
    16.0 * (x - x.powi(6)) * (y - y * y)
}

pub fn default_grad(x: f64, y: f64) -> (f64, f64) {
    (
        16.0 * (1.0 - 6.0 * x.powi(5)) * (y - y * y),
        16.0 * (x - x.powi(6)) * (1.0 - 2.0 * y),
    )
}

/// `f = -Δu = 16 (30 x^4 (y - y^2) + 2 (x - x^6))`.
pub fn default_f(x: f64, y: f64) -> f64 {
    16.0 * (30.0 * x.powi(4) * (y - y * y) + 2.0 * (x - x.powi(6)))
}

pub type ScalarFn = fn(f64, f64) -> f64;
pub type GradFn = fn(f64, f64) -> (f64, f64);

/// Exact solution, its gradient and the matching source term.
pub fn default_problem() -> (ScalarFn, GradFn, ScalarFn) {
    (default_u, default_grad, default_f)
}

fn sin_u(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

fn sin_grad(x: f64, y: f64) -> (f64, f64) {
    (PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos())
}

fn sin_f(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * sin_u(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactSolution {
    /// `16 (x - x^6)(y - y^2)`.
    #[default]
    Polynomial,
    /// `sin(pi x) sin(pi y)`.
    SinSin,
}

impl ExactSolution {
    pub fn functions(self) -> (ScalarFn, GradFn, ScalarFn) {
        match self {
            ExactSolution::Polynomial => default_problem(),
            ExactSolution::SinSin => (sin_u, sin_grad, sin_f),
        }
    }

    /// `|u|_{L2}` in closed form.
    pub fn l2_norm(self) -> f64 {
        match self {
            // 256 * int (x - x^6)^2 * int (y - y^2)^2 = 256 * (25/156) / 30
            ExactSolution::Polynomial => (256.0 * 25.0 / 156.0 / 30.0f64).sqrt(),
            ExactSolution::SinSin => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshKind {
    #[default]
    Uniform,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub family: Family,
    pub order: usize,
    pub dof_mode: DofMode,
    /// Finest level; level `L` has `2^(L-1)` elements per side.
    pub levels: usize,
    pub first_level: usize,
    pub mesh: MeshKind,
    pub seed: u64,
    pub amplitude: f64,
    pub solver: SolverSettings,
    /// Gauss points per direction for assembly; `m + 3` when unset.
    pub assembly_points: Option<usize>,
    /// Gauss points per direction for error norms; `m + 4` when unset.
    pub error_points: Option<usize>,
    pub solution: ExactSolution,
    /// Stop once the L2 error falls below this multiple of `|u|_{L2}`.
    pub stop_ratio: f64,
    /// Record wall time per level; off gives byte-identical output across runs.
    pub record_timing: bool,
}

impl StudyConfig {
    pub fn new(family: Family, order: usize, levels: usize) -> Self {
        Self {
            family,
            order,
            dof_mode: DofMode::Point,
            levels,
            first_level: 1,
            mesh: MeshKind::Uniform,
            seed: 0,
            amplitude: 0.2,
            solver: SolverSettings::default(),
            assembly_points: None,
            error_points: None,
            solution: ExactSolution::Polynomial,
            stop_ratio: 1e-14,
            record_timing: true,
        }
    }

    pub fn kind(&self) -> Result<ElementKind> {
        ElementKind::new(self.family, self.order, self.dof_mode)
    }

    pub fn mesh_at(&self, level: usize) -> Result<QuadMesh> {
        if level == 0 || level > 12 {
            return Err(Error::InvalidArgument(format!("level {level} outside 1..=12")));
        }
        let n = 1usize << (level - 1);
        match self.mesh {
            MeshKind::Uniform => uniform_rect_mesh(n, Rect::UNIT),
            MeshKind::Perturbed => perturbed_mesh(n, self.seed, self.amplitude),
        }
    }

    fn validate(&self) -> Result<()> {
        self.kind()?;
        if self.first_level == 0 || self.first_level > self.levels {
            return Err(Error::InvalidArgument(format!(
                "level range {}..={} is empty",
                self.first_level, self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub l2_err: f64,
    pub l2_order: f64,
    pub h1_err: f64,
    pub h1_order: f64,
    pub ndof: usize,
    pub iters: usize,
    pub seconds: f64,
}

/// Rows computed before a level failed.
#[derive(Debug)]
pub struct StudyFailure {
    pub rows: Vec<StudyRow>,
    pub level: usize,
    pub error: Error,
}

impl fmt::Display for StudyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level {} failed after {} complete rows: {}", self.level, self.rows.len(), self.error)
    }
}

impl std::error::Error for StudyFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn order(prev: Option<&StudyRow>, e: f64, pick: fn(&StudyRow) -> f64) -> f64 {
    prev.map_or(0.0, |p| (pick(p) / e).log2())
}

/// Dimension of the discrete space: unknowns minus independent constraints.
fn space_dimension(space: &GlobalSpace) -> usize {
    let rows = space
        .constraint_matrix()
        .map_or(0, |c| c.rows() - usize::from(space.redundant_row().is_some()));
    space.n_free() - rows
}

fn run_level(config: &StudyConfig, kind: ElementKind, level: usize) -> Result<(f64, f64, usize, usize)> {
    let (u, grad, f) = config.solution.functions();
    let mesh = Arc::new(config.mesh_at(level)?);
    let space = GlobalSpace::new(mesh, kind, true)?;
    let mut system = assemble(
        &space,
        f,
        config.assembly_points.unwrap_or(kind.order + ASSEMBLY_EXTRA_POINTS),
    )?;
    system.settings = config.solver;
    let (x, report) = solve(&system)?;
    let (l2, h1) = error_norms(
        &space,
        &x,
        u,
        grad,
        config.error_points.unwrap_or(kind.order + ERROR_EXTRA_POINTS),
    )?;
    Ok((l2, h1, space_dimension(&space), report.iterations))
}

/// Solves level by level, stopping early once machine accuracy is reached.
pub fn run_study(config: &StudyConfig) -> std::result::Result<Vec<StudyRow>, StudyFailure> {
    let fail = |rows: Vec<StudyRow>, level, error| StudyFailure { rows, level, error };
    if let Err(e) = config.validate() {
        return Err(fail(Vec::new(), config.first_level, e));
    }
    let kind = config.kind().unwrap();
    let unorm = config.solution.l2_norm();
    let mut rows: Vec<StudyRow> = Vec::new();
    for level in config.first_level..=config.levels {
        let start = Instant::now();
        let (l2, h1, ndof, iters) = match run_level(config, kind, level) {
            Ok(v) => v,
            Err(e) => return Err(fail(rows, level, e)),
        };
        let prev = rows.last();
        rows.push(StudyRow {
            level,
            l2_err: l2,
            l2_order: order(prev, l2, |r| r.l2_err),
            h1_err: h1,
            h1_order: order(prev, h1, |r| r.h1_err),
            ndof,
            iters,
            seconds: if config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if l2 < config.stop_ratio * unorm {
            break;
        }
    }
    Ok(rows)
}

/// Errors of the canonical interpolant instead of the discrete solution.
pub fn run_interpolation_study(config: &StudyConfig) -> Result<Vec<StudyRow>> {
    config.validate()?;
    let kind = config.kind()?;
    let (u, grad, _) = config.solution.functions();
    let mut rows: Vec<StudyRow> = Vec::new();
    for level in config.first_level..=config.levels {
        let start = Instant::now();
        let space = GlobalSpace::new(Arc::new(config.mesh_at(level)?), kind, true)?;
        let fe = interpolate(&space, u)?;
        let (l2, h1) = error_norms(
            &space,
            &fe.coeffs,
            u,
            grad,
            config.error_points.unwrap_or(kind.order + ERROR_EXTRA_POINTS),
        )?;
        let prev = rows.last();
        rows.push(StudyRow {
            level,
            l2_err: l2,
            l2_order: order(prev, l2, |r| r.l2_err),
            h1_err: h1,
            h1_order: order(prev, h1, |r| r.h1_err),
            ndof: space_dimension(&space),
            iters: 0,
            seconds: if config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 8] = ["level", "l2_err", "l2_order", "h1_err", "h1_order", "ndof", "iters", "seconds"];

/// Twelve significant digits.
fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn require_rows(rows: &[StudyRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to emit".into()));
    }
    Ok(())
}

pub fn write_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    require_rows(rows)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            sig12(r.l2_err),
            sig12(r.l2_order),
            sig12(r.h1_err),
            sig12(r.h1_order),
            r.ndof.to_string(),
            r.iters.to_string(),
            sig12(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<StudyRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let bad = |m: String| Error::InvalidArgument(format!("malformed study CSV: {m}"));
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        if r.len() != CSV_HEADER.len() {
            return Err(bad(format!("{} fields", r.len())));
        }
        let float = |i: usize| r[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        let int = |i: usize| r[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        rows.push(StudyRow {
            level: int(0)?,
            l2_err: float(1)?,
            l2_order: float(2)?,
            h1_err: float(3)?,
            h1_order: float(4)?,
            ndof: int(5)?,
            iters: int(6)?,
            seconds: float(7)?,
        });
    }
    Ok(rows)
}

/// Plain-text table in the layout of the published convergence tables.
pub fn format_table(rows: &[StudyRow]) -> Result<String> {
    require_rows(rows)?;
    let mut s = format!(
        "{:>5}  {:>16} {:>5}  {:>16} {:>5}  {:>9} {:>7}\n",
        "level", "|u-u_h|_0", "h^r", "|u-u_h|_1,h", "h^r", "ndof", "iters"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>5}  {:>16.9e} {:>5.1}  {:>16.9e} {:>5.1}  {:>9} {:>7}\n",
            r.level, r.l2_err, r.l2_order, r.h1_err, r.h1_order, r.ndof, r.iters
        ));
    }
    Ok(s)
}

/// One line of the reference-element self check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: String, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Unisolvency, null-vector alignment and relation checks for every
/// implemented family and order.
pub fn verify_reference_elements() -> Vec<Check> {
    let mut out = Vec::new();
    let mut kinds = Vec::new();
    for m in [1, 3, 5, 7] {
        kinds.push(ElementKind::new(Family::R, m, DofMode::Point));
        if m > 1 {
            kinds.push(ElementKind::new(Family::R_TILDE, m, DofMode::Point));
        }
        kinds.push(ElementKind::new(Family::ER, m, DofMode::Point));
        kinds.push(ElementKind::new(Family::ER, m, DofMode::Moment));
    }
    for m in [2, 4, 6] {
        kinds.push(ElementKind::new(Family::RPLUS, m, DofMode::Point));
    }
    for kind in kinds {
        let kind = kind.expect("listed kinds are valid");
        match build_reference_element(kind) {
            Err(e) => out.push(check(format!("{kind} unisolvent"), false, e.to_string())),
            Ok(el) => {
                let rep = el.unisolvency();
                out.push(check(
                    format!("{kind} unisolvent"),
                    rep.rank == el.dim(),
                    format!("rank {} of {} functionals, dim {}", rep.rank, rep.n_dofs, rep.dim),
                ));
                if let Some(w) = el.constraint() {
                    let d = rep.null_cosine_distance(w).unwrap_or(f64::INFINITY);
                    out.push(check(
                        format!("{kind} null vector"),
                        d < 1e-10,
                        format!("cosine distance {d:.2e}"),
                    ));
                }
            }
        }
    }
    for m in [1, 3, 5, 7, 9] {
        out.push(weight_check(Family::R, m));
    }
    for m in [2, 4, 6, 8] {
        out.push(weight_check(Family::RPLUS, m));
    }
    for (family, m) in [(Family::R, 3), (Family::R, 5), (Family::RPLUS, 4)] {
        let worst = crate::refelem::build_shape_space(family, m).and_then(|basis| {
            basis.iter().try_fold(0.0f64, |acc, p| {
                Ok(acc.max(verify_relation(m, family, p)? / p.max_abs_coeff().max(1.0)))
            })
        });
        match worst {
            Ok(r) => out.push(check(format!("{family}_{m} relation on the shape space"), r <= 1e-12, format!("residual {r:.2e}"))),
            Err(e) => out.push(check(format!("{family}_{m} relation on the shape space"), false, e.to_string())),
        }
    }
    out
}

fn weight_check(family: Family, m: usize) -> Check {
    let name = format!("{family}_{m} weights vs Lagrange oracle");
    match (constraint_weights(family, m), constraint_weights_oracle(m)) {
        (Ok(w), Ok(o)) => {
            let n = w.len().min(o.len());
            let d = 1.0 - crate::refelem::cosine(&w[..n], &o[..n]).abs();
            check(name, d < 1e-12, format!("cosine distance {d:.2e}"))
        }
        (Err(e), _) | (_, Err(e)) => check(name, false, e.to_string()),
    }
}
