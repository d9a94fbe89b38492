//! Global nonconforming spaces on a [`QuadMesh`].
//!
//! Edge functionals are shared between the two elements of an interior
//! edge. They are numbered first, `m` per edge in the global edge
//! orientation. Corner and interior functionals follow, element by element.
//! For `R` and `RPlus` the coefficient vector holds all edge point values
//! and every element contributes one explicit constraint row.

use std::sync::Arc;

use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::legendre1d::{gauss_lobatto_nodes, gauss_rule, lagrange_basis, lagrange_poly, QuadRule1D};
use crate::mesh::{GeomMap, QuadMesh};
use crate::refelem::{
    numerical_rank, reference_element, DofKind, DofLocation, DofMode, ElementKind, FamilyTag, LocalEdge, Poly2D,
    ReferenceElement,
};

/// Relative tolerance for the relation check on interpolated values.
pub const INTERPOLATION_RESIDUAL_TOL: f64 = 1e-9;

/// Where a local functional lives in the global coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofSlot {
    pub global: usize,
    /// Index among the unknowns, `None` when fixed by the boundary condition.
    pub free: Option<usize>,
    /// `-1` for odd moments seen against the global edge orientation.
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct GlobalSpace {
    mesh: Arc<QuadMesh>,
    element: Arc<ReferenceElement>,
    homogeneous: bool,
    n_global: usize,
    n_free: usize,
    free_of_global: Vec<Option<usize>>,
    slots: Vec<DofSlot>,
    constraint: Option<CsMat<f64>>,
    redundant_row: Option<usize>,
}

impl GlobalSpace {
    pub fn new(mesh: Arc<QuadMesh>, kind: ElementKind, homogeneous: bool) -> Result<Self> {
        let element = reference_element(kind)?;
        let m = kind.order;
        let n_loc = element.n_dofs();
        let n_edge_dofs = mesh.n_edges() * m;
        let per_element = element
            .dofs()
            .iter()
            .filter(|d| !matches!(d.location, DofLocation::Edge { .. }))
            .count();
        let n_global = n_edge_dofs + mesh.n_elements() * per_element;

        let mut fixed = vec![false; n_global];
        if homogeneous {
            for (id, edge) in mesh.edges().iter().enumerate() {
                if edge.is_boundary() {
                    fixed[id * m..(id + 1) * m].fill(true);
                }
            }
        }
        let mut free_of_global = Vec::with_capacity(n_global);
        let mut n_free = 0;
        for &f in &fixed {
            free_of_global.push(if f {
                None
            } else {
                n_free += 1;
                Some(n_free - 1)
            });
        }

        let mut slots = Vec::with_capacity(mesh.n_elements() * n_loc);
        for e in 0..mesh.n_elements() {
            let mut next_local = n_edge_dofs + e * per_element;
            for dof in element.dofs() {
                let (global, sign) = match (dof.location, dof.kind) {
                    (DofLocation::Edge { edge, slot }, kind) => {
                        let id = mesh.element_edge(e, edge);
                        let agrees = mesh.local_agrees(e, edge);
                        match kind {
                            DofKind::Point { .. } => (id * m + if agrees { slot } else { m - 1 - slot }, 1.0),
                            DofKind::EdgeMoment { degree, .. } => {
                                let flip = !agrees && degree % 2 == 1;
                                (id * m + slot, if flip { -1.0 } else { 1.0 })
                            }
                        }
                    }
                    _ => {
                        next_local += 1;
                        (next_local - 1, 1.0)
                    }
                };
                slots.push(DofSlot {
                    global,
                    free: free_of_global[global],
                    sign,
                });
            }
        }

        let mut space = Self {
            mesh,
            element,
            homogeneous,
            n_global,
            n_free,
            free_of_global,
            slots,
            constraint: None,
            redundant_row: None,
        };
        if let Some(w) = space.element.constraint() {
            let w = w.to_vec();
            let scale = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let ne = space.mesh.n_elements();
            let mut tri = TriMat::new((ne, space.n_free));
            for e in 0..ne {
                for (slot, wi) in space.element_slots(e).iter().zip(&w) {
                    if let (Some(f), true) = (slot.free, *wi != 0.0) {
                        tri.add_triplet(e, f, wi * slot.sign / scale);
                    }
                }
            }
            space.constraint = Some(tri.to_csr());
            // on a simply connected mesh with homogeneous data the rows sum to rank N_E - 1
            space.redundant_row = homogeneous.then(|| ne - 1);
        }
        Ok(space)
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.element
    }

    pub fn kind(&self) -> ElementKind {
        self.element.kind()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    /// Number of unknowns, i.e. unmasked global functionals.
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_fixed(&self) -> usize {
        self.n_global - self.n_free
    }

    pub fn free_index(&self, global: usize) -> Option<usize> {
        self.free_of_global[global]
    }

    pub fn element_slots(&self, element: usize) -> &[DofSlot] {
        let n = self.element.n_dofs();
        &self.slots[element * n..(element + 1) * n]
    }

    /// One row per element over the unknowns; `None` for `ER`.
    pub fn constraint_matrix(&self) -> Option<&CsMat<f64>> {
        self.constraint.as_ref()
    }

    /// Row that is a combination of the others, if known.
    pub fn redundant_row(&self) -> Option<usize> {
        self.redundant_row
    }

    /// Numerical rank of the constraint matrix (dense SVD, meant for small meshes).
    pub fn constraint_rank(&self) -> usize {
        match &self.constraint {
            None => 0,
            Some(c) => {
                let dense = DMatrix::from_fn(c.rows(), c.cols(), |i, j| *c.get(i, j).unwrap_or(&0.0));
                numerical_rank(dense.singular_values().as_slice())
            }
        }
    }

    /// Dimension of the space: unknowns minus independent constraints.
    pub fn kernel_dimension(&self) -> usize {
        self.n_free - self.constraint_rank()
    }

    /// Local functional values of a coefficient vector over the unknowns,
    /// with the dropped value recovered from the relation.
    pub fn local_values(&self, coeffs: &[f64], element: usize) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .element_slots(element)
            .iter()
            .map(|s| s.free.map_or(0.0, |f| s.sign * coeffs[f]))
            .collect();
        self.element.reconstruct_dropped(&mut values);
        values
    }

    pub fn zero_function(&self) -> FeFunction<'_> {
        FeFunction {
            space: self,
            coeffs: vec![0.0; self.n_free],
        }
    }

    pub fn function(&self, coeffs: Vec<f64>) -> Result<FeFunction<'_>> {
        if coeffs.len() != self.n_free {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a space with {} unknowns",
                coeffs.len(),
                self.n_free
            )));
        }
        Ok(FeFunction { space: self, coeffs })
    }
}

pub fn build_global_space(mesh: Arc<QuadMesh>, kind: ElementKind, homogeneous: bool) -> Result<GlobalSpace> {
    GlobalSpace::new(mesh, kind, homogeneous)
}

/// Closed-form dimension of the homogeneous space on a simply connected mesh.
pub fn expected_dimension(space: &GlobalSpace) -> usize {
    let mesh = space.mesh();
    let kind = space.kind();
    let k = kind.k();
    let (ne, vi, si) = (mesh.n_elements(), mesh.n_interior_vertices(), mesh.n_interior_edges());
    let interior = |a: usize| if k == 0 { 0 } else { (2 * k).saturating_sub(a) * (k - 1) };
    match kind.family.tag {
        FamilyTag::R => ne * interior(1) + vi + si * 2 * k,
        FamilyTag::RPlus => ne * (interior(3) + 1) + vi + si * (2 * k - 1),
        FamilyTag::ER => ne * interior(1) + si * (2 * k + 1),
    }
}

/// A member of a [`GlobalSpace`], stored by its values on the unknowns.
#[derive(Debug, Clone)]
pub struct FeFunction<'a> {
    pub space: &'a GlobalSpace,
    pub coeffs: Vec<f64>,
}

impl FeFunction<'_> {
    pub fn local_values(&self, element: usize) -> Vec<f64> {
        self.space.local_values(&self.coeffs, element)
    }

    /// Value and physical gradient at a reference point of `element`.
    pub fn evaluate(&self, element: usize, xh: f64, yh: f64) -> Result<(f64, (f64, f64))> {
        let values = self.local_values(element);
        let (v, gx, gy) = self.space.reference().eval_with_grad(&values, xh, yh);
        let jac = self.space.mesh().geom_map(element).jacobian(xh, yh)?;
        Ok((v, jac.pullback(gx, gy)))
    }

    /// `max |C x|`, zero for unconstrained spaces.
    pub fn constraint_residual(&self) -> f64 {
        self.space.constraint_matrix().map_or(0.0, |c| {
            let mut r = vec![0.0; c.rows()];
            sprs::prod::mul_acc_mat_vec_csr(c.view(), self.coeffs.as_slice(), r.as_mut_slice());
            r.iter().fold(0.0, |a, x| a.max(x.abs()))
        })
    }
}

/// Tensor Lagrange interpolation at Gauss-Lobatto nodes, the canonical `Q_m` interpolant.
#[derive(Debug, Clone)]
pub struct QInterpolator {
    nodes: Vec<f64>,
}

impl QInterpolator {
    pub fn new(m: usize) -> Result<Self> {
        Ok(Self {
            nodes: gauss_lobatto_nodes(m + 1)?,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `u` at the mapped tensor nodes, `grid[a * (m + 1) + b]` at `(ξ_a, ξ_b)`.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, map: &GeomMap, u: F) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|&a| self.nodes.iter().map(move |&b| (a, b)))
            .map(|(a, b)| {
                let (x, y) = map.map(a, b);
                u(x, y)
            })
            .collect()
    }

    /// Interpolant of sampled values at a reference point.
    pub fn eval(&self, grid: &[f64], xh: f64, yh: f64) -> f64 {
        let n = self.nodes.len();
        let lx: Vec<f64> = (0..n).map(|a| lagrange_basis(&self.nodes, a, xh)).collect();
        let ly: Vec<f64> = (0..n).map(|b| lagrange_basis(&self.nodes, b, yh)).collect();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += grid[a * n + b] * lx[a] * ly[b];
            }
        }
        s
    }

    /// The interpolant as a polynomial in reference coordinates.
    pub fn polynomial(&self, grid: &[f64]) -> Poly2D {
        let n = self.nodes.len();
        let basis: Vec<_> = (0..n).map(|a| lagrange_poly(&self.nodes, a)).collect();
        let mut p = Poly2D::zero();
        for a in 0..n {
            for b in 0..n {
                p = &p + &Poly2D::tensor(&basis[a], &basis[b]).scale(grid[a * n + b]);
            }
        }
        p
    }
}

/// `Q_m` interpolant of `u` on one element, in reference coordinates.
pub fn q_interpolate<F: Fn(f64, f64) -> f64>(map: &GeomMap, m: usize, u: F) -> Result<Poly2D> {
    let q = QInterpolator::new(m)?;
    Ok(q.polynomial(&q.sample(map, u)))
}

/// The canonical interpolant of `u`: point values for `ER`, edge moments
/// plus interior values for `ER` in moment mode, and the point values of the
/// elementwise `Q_m` interpolant for `R` and `RPlus`.
pub fn interpolate<'a, F: Fn(f64, f64) -> f64>(space: &'a GlobalSpace, u: F) -> Result<FeFunction<'a>> {
    let kind = space.kind();
    let el = space.reference();
    let mesh = space.mesh();
    let use_q = el.constraint().is_some();
    let qi = QInterpolator::new(kind.order)?;
    let moments = (kind.dof_mode == DofMode::Moment).then(|| gauss_rule(kind.order + 4)).transpose()?;
    let mut coeffs = vec![0.0; space.n_free()];
    let mut local = vec![0.0; el.n_dofs()];
    for e in 0..mesh.n_elements() {
        let map = mesh.geom_map(e);
        let grid = if use_q { qi.sample(&map, &u) } else { Vec::new() };
        for (value, dof) in local.iter_mut().zip(el.dofs()) {
            *value = match dof.kind {
                DofKind::Point { x, y } if use_q => qi.eval(&grid, x, y),
                DofKind::Point { x, y } => {
                    let (px, py) = map.map(x, y);
                    u(px, py)
                }
                DofKind::EdgeMoment { edge, degree } => edge_moment(&map, edge, degree, moments.as_ref().unwrap(), &u),
            };
        }
        if let Some(w) = el.constraint() {
            let (r, scale) = w
                .iter()
                .zip(&local)
                .fold((0.0, 0.0), |(r, s), (wi, vi)| (r + wi * vi, s + (wi * vi).abs()));
            if r.abs() > INTERPOLATION_RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InterpolationResidual {
                    element: e,
                    residual: r.abs() / scale,
                });
            }
        }
        for (slot, v) in space.element_slots(e).iter().zip(&local) {
            if let Some(f) = slot.free {
                coeffs[f] = slot.sign * v;
            }
        }
    }
    space.function(coeffs)
}

fn edge_moment<F: Fn(f64, f64) -> f64>(map: &GeomMap, edge: LocalEdge, degree: usize, rule: &QuadRule1D, u: &F) -> f64 {
    rule.integrate(|t| {
        let (xh, yh) = edge.point(t);
        let (x, y) = map.map(xh, yh);
        u(x, y) * crate::legendre1d::legendre_eval(degree, t)
    })
}

/// Columns of the discontinuous (broken) space: the retained local
/// functionals of every element.
fn retained(el: &ReferenceElement) -> Vec<usize> {
    (0..el.n_dofs()).filter(|&i| Some(i) != el.dropped_dof()).collect()
}

/// Broken-space coordinates of a global coefficient vector.
pub fn to_discontinuous(space: &GlobalSpace, coeffs: &[f64]) -> Vec<f64> {
    let keep = retained(space.reference());
    (0..space.mesh().n_elements())
        .flat_map(|e| {
            let values = space.local_values(coeffs, e);
            keep.iter().map(move |&i| values[i]).collect::<Vec<_>>()
        })
        .collect()
}

/// Jumps at interior-edge Gauss points and traces at boundary Gauss points,
/// as functionals on the broken space (see [`to_discontinuous`]).
pub fn jump_functionals(space: &GlobalSpace) -> Result<CsMat<f64>> {
    let kind = space.kind();
    if kind.dof_mode != DofMode::Point {
        return Err(Error::InvalidArgument("jump functionals need point degrees of freedom".into()));
    }
    let el = space.reference();
    let mesh = space.mesh();
    let m = kind.order;
    let keep = retained(el);
    let nodes = gauss_rule(m)?.nodes().to_vec();
    let mut tri = TriMat::new((mesh.n_edges() * m, mesh.n_elements() * keep.len()));
    for (id, edge) in mesh.edges().iter().enumerate() {
        let sides = std::iter::once((edge.left, 1.0)).chain(edge.right.map(|r| (r, -1.0)));
        for ((e, local), sign) in sides {
            let agrees = mesh.local_agrees(e, local);
            for s in 0..m {
                let t = nodes[if agrees { s } else { m - 1 - s }];
                let (xh, yh) = local.point(t);
                for (c, &i) in keep.iter().enumerate() {
                    let v = el.nodal_basis()[i].eval(xh, yh);
                    if v != 0.0 {
                        tri.add_triplet(id * m + s, e * keep.len() + c, sign * v);
                    }
                }
            }
        }
    }
    Ok(tri.to_csr())
}
