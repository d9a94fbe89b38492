//! Reference element layer on `[-1, 1]^2`.
//!
//! Three families are supported:
//!
//! * `R` (odd `m`): `P_m + span{x^m y - x y^m}`, point values at the `4m`
//!   edge Gauss points and at interior lattice points. The edge values obey
//!   one linear relation, so one edge point is redundant.
//! * `ER` (odd `m`): `P_m + span{x^m y - x y^m, x^{m+1} - y^{m+1}}`, with
//!   either point values or Legendre edge moments on the boundary.
//!   Unisolvent, no relation.
//! * `RPlus` (even `m`): `P_m + span{x^m y, x y^m}`, point values at the
//!   `4m` edge Gauss points, the corner `(1, 1)` and interior points. The
//!   edge values obey one relation again.
//!
//! Local edges are numbered `e1..e4` = left, bottom, right, top, and every
//! edge is parametrized by the free coordinate, increasing.

mod poly2d;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::legendre1d::{gauss_rule, lagrange_basis, legendre_poly, QuadRule1D};

pub use poly2d::{bubble, Poly2D};

/// Highest order the monomial representation is trusted with.
pub const MAX_ORDER: usize = 9;

/// Relative singular value threshold used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalEdge {
    /// `e1`: `x = -1`, from `A1` to `A4`.
    Left,
    /// `e2`: `y = -1`, from `A1` to `A2`.
    Bottom,
    /// `e3`: `x = 1`, from `A2` to `A3`.
    Right,
    /// `e4`: `y = 1`, from `A4` to `A3`.
    Top,
}

impl LocalEdge {
    pub const ALL: [LocalEdge; 4] = [LocalEdge::Left, LocalEdge::Bottom, LocalEdge::Right, LocalEdge::Top];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Reference point at edge parameter `t`.
    pub fn point(self, t: f64) -> (f64, f64) {
        match self {
            LocalEdge::Left => (-1.0, t),
            LocalEdge::Bottom => (t, -1.0),
            LocalEdge::Right => (1.0, t),
            LocalEdge::Top => (t, 1.0),
        }
    }

    /// Local vertex indices at parameter `-1` and `+1`.
    pub fn vertices(self) -> (usize, usize) {
        match self {
            LocalEdge::Left => (0, 3),
            LocalEdge::Bottom => (0, 1),
            LocalEdge::Right => (1, 2),
            LocalEdge::Top => (3, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyTag {
    R,
    ER,
    RPlus,
}

/// `Tilde` swaps the `R` enrichment for the single monomial `x y^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Standard,
    Tilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Family {
    pub tag: FamilyTag,
    pub variant: Variant,
}

impl Family {
    pub const R: Family = Family {
        tag: FamilyTag::R,
        variant: Variant::Standard,
    };
    pub const R_TILDE: Family = Family {
        tag: FamilyTag::R,
        variant: Variant::Tilde,
    };
    pub const ER: Family = Family {
        tag: FamilyTag::ER,
        variant: Variant::Standard,
    };
    pub const RPLUS: Family = Family {
        tag: FamilyTag::RPlus,
        variant: Variant::Standard,
    };

    pub fn name(self) -> &'static str {
        match (self.tag, self.variant) {
            (FamilyTag::R, Variant::Standard) => "R",
            (FamilyTag::R, Variant::Tilde) => "R~",
            (FamilyTag::ER, _) => "ER",
            (FamilyTag::RPlus, _) => "R+",
        }
    }

    /// Whether the edge point values satisfy a linear relation.
    pub fn has_constraint(self) -> bool {
        self.tag != FamilyTag::ER
    }

    /// Checks parity, range and variant compatibility of `order`.
    pub fn check_order(self, order: usize) -> Result<()> {
        let mismatch = |expected| Error::OrderMismatch {
            family: self.name(),
            order,
            expected,
        };
        if order > MAX_ORDER {
            return Err(mismatch("orders above 9 are not supported"));
        }
        match self.tag {
            FamilyTag::R | FamilyTag::ER if order.is_multiple_of(2) => Err(mismatch("odd order required")),
            FamilyTag::RPlus if order % 2 == 1 || order == 0 => Err(mismatch("even order >= 2 required")),
            FamilyTag::ER | FamilyTag::RPlus if self.variant == Variant::Tilde => {
                Err(mismatch("the tilde variant exists for R only"))
            }
            // x y vanishes at all four edge midpoints
            FamilyTag::R if self.variant == Variant::Tilde && order < 3 => Err(mismatch("tilde variant needs m >= 3")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Boundary functionals of the `ER` family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DofMode {
    #[default]
    Point,
    Moment,
}

/// A validated `(family, order, dof mode)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElementKind {
    pub family: Family,
    pub order: usize,
    pub dof_mode: DofMode,
}

impl ElementKind {
    pub fn new(family: Family, order: usize, dof_mode: DofMode) -> Result<Self> {
        family.check_order(order)?;
        if dof_mode == DofMode::Moment && family.tag != FamilyTag::ER {
            return Err(Error::InvalidArgument(format!(
                "moment degrees of freedom are defined for ER only, not {family}"
            )));
        }
        Ok(Self {
            family,
            order,
            dof_mode,
        })
    }

    /// `k` with `m = 2k + 1` (odd) or `m = 2k` (even).
    pub fn k(&self) -> usize {
        self.order / 2
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.family, self.order)?;
        if self.dof_mode == DofMode::Moment {
            f.write_str("^M")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofKind {
    Point { x: f64, y: f64 },
    /// `int_{-1}^{1} v(edge(t)) L_degree(t) dt`.
    EdgeMoment { edge: LocalEdge, degree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofLocation {
    /// `slot` counts along the edge in increasing parameter order.
    Edge { edge: LocalEdge, slot: usize },
    Corner,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofFunctional {
    pub kind: DofKind,
    pub location: DofLocation,
}

impl DofFunctional {
    pub fn apply(&self, p: &Poly2D) -> f64 {
        match self.kind {
            DofKind::Point { x, y } => p.eval(x, y),
            DofKind::EdgeMoment { edge, degree } => {
                let product = &p.trace(edge) * &legendre_poly(degree);
                // exact monomial integration over [-1, 1]
                product
                    .coeffs()
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| n % 2 == 0)
                    .map(|(n, c)| 2.0 * c / (n + 1) as f64)
                    .sum()
            }
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self.location, DofLocation::Edge { .. })
    }
}

/// Monomial basis of `P_m` followed by the family's enrichment.
pub fn build_shape_space(family: Family, m: usize) -> Result<Vec<Poly2D>> {
    family.check_order(m)?;
    let mut basis = Vec::with_capacity((m + 1) * (m + 2) / 2 + 2);
    for d in 0..=m {
        for j in 0..=d {
            basis.push(Poly2D::monomial(d - j, j, 1.0));
        }
    }
    match (family.tag, family.variant) {
        // x y - x y vanishes, so R_1 is plain P_1 and ER_1 is rotated Q_1
        (FamilyTag::R, Variant::Standard) if m > 1 => {
            basis.push(Poly2D::from_terms(&[(m, 1, 1.0), (1, m, -1.0)]));
        }
        (FamilyTag::R, Variant::Standard) => {}
        (FamilyTag::R, Variant::Tilde) => basis.push(Poly2D::monomial(1, m, 1.0)),
        (FamilyTag::ER, _) => {
            if m > 1 {
                basis.push(Poly2D::from_terms(&[(m, 1, 1.0), (1, m, -1.0)]));
            }
            basis.push(Poly2D::from_terms(&[(m + 1, 0, 1.0), (0, m + 1, -1.0)]));
        }
        (FamilyTag::RPlus, _) => {
            basis.push(Poly2D::monomial(m, 1, 1.0));
            basis.push(Poly2D::monomial(1, m, 1.0));
        }
    }
    Ok(basis)
}

/// The `m`-point Gauss rule whose nodes carry the edge degrees of freedom.
pub fn edge_rule(m: usize) -> QuadRule1D {
    gauss_rule(m).expect("Gauss rules up to order 9 always converge")
}

/// Point functionals on the boundary in canonical order (edges `e1..e4`,
/// increasing parameter), with the corner `(1, 1)` appended for `RPlus`.
pub fn boundary_dof_points(family: Family, m: usize) -> Result<Vec<DofFunctional>> {
    family.check_order(m)?;
    let rule = edge_rule(m);
    let mut dofs = Vec::with_capacity(4 * m + 1);
    for edge in LocalEdge::ALL {
        for (slot, &t) in rule.nodes().iter().enumerate() {
            let (x, y) = edge.point(t);
            dofs.push(DofFunctional {
                kind: DofKind::Point { x, y },
                location: DofLocation::Edge { edge, slot },
            });
        }
    }
    if family.tag == FamilyTag::RPlus {
        dofs.push(DofFunctional {
            kind: DofKind::Point { x: 1.0, y: 1.0 },
            location: DofLocation::Corner,
        });
    }
    Ok(dofs)
}

/// Legendre moments of degree `0..m-1` on each edge, canonical order.
pub fn edge_moment_dofs(m: usize) -> Result<Vec<DofFunctional>> {
    Family::ER.check_order(m)?;
    Ok(LocalEdge::ALL
        .iter()
        .flat_map(|&edge| {
            (0..m).map(move |degree| DofFunctional {
                kind: DofKind::EdgeMoment { edge, degree },
                location: DofLocation::Edge { edge, slot: degree },
            })
        })
        .collect())
}

/// Degree of the total-degree space the interior points must resolve, if any.
fn interior_degree(family: Family, m: usize) -> Option<usize> {
    let k = m / 2;
    match family.tag {
        FamilyTag::R | FamilyTag::ER if k >= 2 => Some(2 * k - 3),
        FamilyTag::RPlus if k >= 2 => Some(2 * k - 4),
        _ => None,
    }
}

/// Interior point functionals: the principal lattice of the interior
/// degree on the triangle `(-1/2,-1/2), (1/2,-1/2), (-1/2,1/2)`.
pub fn interior_dof_points(family: Family, m: usize) -> Result<Vec<DofFunctional>> {
    family.check_order(m)?;
    let Some(d) = interior_degree(family, m) else {
        return Ok(Vec::new());
    };
    let point = |x: f64, y: f64| DofFunctional {
        kind: DofKind::Point { x, y },
        location: DofLocation::Interior,
    };
    if d == 0 {
        return Ok(vec![point(-1.0 / 6.0, -1.0 / 6.0)]);
    }
    let mut dofs = Vec::with_capacity((d + 1) * (d + 2) / 2);
    for b in 0..=d {
        for a in 0..=d - b {
            dofs.push(point(-0.5 + a as f64 / d as f64, -0.5 + b as f64 / d as f64));
        }
    }
    Ok(dofs)
}

/// Positive Gauss nodes of the `m`-point rule, increasing.
fn positive_nodes(rule: &QuadRule1D) -> Vec<f64> {
    rule.nodes().iter().copied().filter(|&g| g > 0.0).collect()
}

/// Relation coefficient attached to the edge node `g` (same on all four edges
/// up to sign).
fn node_weight(tag: FamilyTag, g: f64, positive: &[f64]) -> f64 {
    let others = || positive.iter().filter(move |&&p| (p - g.abs()).abs() > 1e-12);
    match tag {
        FamilyTag::R if g == 0.0 => 4.0 * positive.iter().map(|p| (p * p - 1.0) / (p * p)).product::<f64>(),
        FamilyTag::R => {
            2.0 / (g * g)
                * others()
                    .map(|p| (1.0 - p * p) / (g * g - p * p))
                    .product::<f64>()
        }
        FamilyTag::RPlus => {
            1.0 / (g * (1.0 - g * g) * others().map(|p| g * g - p * p).product::<f64>())
        }
        FamilyTag::ER => unreachable!("ER has no edge relation"),
    }
}

fn edge_sign(tag: FamilyTag, edge: LocalEdge) -> f64 {
    match (tag, edge) {
        (FamilyTag::R, LocalEdge::Left | LocalEdge::Right) => 1.0,
        (FamilyTag::R, _) => -1.0,
        (_, LocalEdge::Right | LocalEdge::Bottom) => 1.0,
        (_, LocalEdge::Left | LocalEdge::Top) => -1.0,
    }
}

fn expand_over_edges(tag: FamilyTag, per_node: &[f64], with_corner: bool) -> Vec<f64> {
    let mut w: Vec<f64> = LocalEdge::ALL
        .iter()
        .flat_map(|&e| per_node.iter().map(move |&c| edge_sign(tag, e) * c))
        .collect();
    if with_corner {
        w.push(0.0);
    }
    w
}

/// Weights `w` over [`boundary_dof_points`] such that `w . values = 0` for
/// every shape function. `R`: the closed-form gamma coefficients, `+` on
/// the vertical edges and `-` on the horizontal ones. `RPlus`: signs
/// `(+, -, -, +)` on `(x = 1, x = -1, y = 1, y = -1)` and zero at the corner.
pub fn constraint_weights(family: Family, m: usize) -> Result<Vec<f64>> {
    family.check_order(m)?;
    if !family.has_constraint() {
        return Err(Error::InvalidArgument("the ER family has no edge relation".into()));
    }
    let rule = edge_rule(m);
    let positive = positive_nodes(&rule);
    let per_node: Vec<f64> = rule
        .nodes()
        .iter()
        .map(|&g| node_weight(family.tag, g, &positive))
        .collect();
    Ok(expand_over_edges(family.tag, &per_node, family.tag == FamilyTag::RPlus))
}

/// The odd-order relation after cancelling the common factor
/// `2 prod_j (1 - g_j^2)`: node weights `c_i / prod_{j != |i|} (g_i^2 - g_j^2)`
/// with `c_0 = 2` and `c_i = 1 / (g_i^2 (1 - g_i^2))`.
pub fn reduced_constraint_weights(m: usize) -> Result<Vec<f64>> {
    Family::R.check_order(m)?;
    let rule = edge_rule(m);
    let positive = positive_nodes(&rule);
    let per_node: Vec<f64> = rule
        .nodes()
        .iter()
        .map(|&g| {
            let lead = if g == 0.0 { 2.0 } else { 1.0 / (g * g * (1.0 - g * g)) };
            let denom: f64 = positive
                .iter()
                .filter(|&&p| (p - g.abs()).abs() > 1e-12)
                .map(|p| g * g - p * p)
                .product();
            lead / denom
        })
        .collect();
    Ok(expand_over_edges(FamilyTag::R, &per_node, false))
}

/// Relation weights computed directly from the two augmented Lagrange bases
/// (Gauss nodes plus `-1`, Gauss nodes plus `+1`): `alpha_i + beta_i` for odd
/// `m`, `alpha_i` for even `m`. Shares no code with [`constraint_weights`].
pub fn constraint_weights_oracle(m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("order {m} out of range")));
    }
    let g = edge_rule(m).nodes().to_vec();
    let with_left: Vec<f64> = std::iter::once(-1.0).chain(g.iter().copied()).collect();
    let with_right: Vec<f64> = g.iter().copied().chain(std::iter::once(1.0)).collect();
    let per_node: Vec<f64> = (0..m)
        .map(|i| {
            let alpha = lagrange_basis(&with_left, i + 1, 1.0);
            let beta = lagrange_basis(&with_right, i, -1.0);
            if m % 2 == 1 {
                alpha + beta
            } else {
                alpha
            }
        })
        .collect();
    let tag = if m % 2 == 1 { FamilyTag::R } else { FamilyTag::RPlus };
    Ok(expand_over_edges(tag, &per_node, m.is_multiple_of(2)))
}

/// `prod_{i=1}^{k} (x^2 + y^2 - 1 - g_i^2)` over the positive nodes of the
/// `2k`-point rule; vanishes at every edge Gauss point of `RPlus_{2k}`.
pub fn discrete_bubble(k: usize) -> Result<Poly2D> {
    if k == 0 {
        return Err(Error::InvalidArgument("discrete bubble needs k >= 1".into()));
    }
    let rule = gauss_rule(2 * k)?;
    Ok(positive_nodes(&rule).iter().fold(Poly2D::monomial(0, 0, 1.0), |acc, g| {
        let factor = Poly2D::from_terms(&[(2, 0, 1.0), (0, 2, 1.0), (0, 0, -1.0 - g * g)]);
        &acc * &factor
    }))
}

/// `|w . v(G)|` for the relation of `family` at order `m`.
pub fn verify_relation(m: usize, family: Family, v: &Poly2D) -> Result<f64> {
    let weights = constraint_weights(family, m)?;
    let points = boundary_dof_points(family, m)?;
    Ok(weights
        .iter()
        .zip(&points)
        .map(|(w, dof)| w * dof.apply(v))
        .sum::<f64>()
        .abs())
}

/// Rank and null-space data of the generalized Vandermonde matrix.
#[derive(Debug, Clone)]
pub struct UnisolvencyReport {
    pub n_dofs: usize,
    pub dim: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Left null vector, present when there is one more DOF than the dimension.
    pub left_null: Option<Vec<f64>>,
}

impl UnisolvencyReport {
    /// `1 - |cos|` between the left null vector and `w`.
    pub fn null_cosine_distance(&self, w: &[f64]) -> Option<f64> {
        let y = self.left_null.as_ref()?;
        Some(1.0 - cosine(y, w).abs())
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Numerical rank with the relative threshold [`RANK_TOL`].
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let max = singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    singular_values.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// A reference element: shape space, functionals and the nodal basis.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    kind: ElementKind,
    basis: Vec<Poly2D>,
    dofs: Vec<DofFunctional>,
    nodal: Vec<Poly2D>,
    constraint: Option<Vec<f64>>,
    dropped: Option<usize>,
}

impl ReferenceElement {
    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.kind.order
    }

    pub fn family(&self) -> Family {
        self.kind.family
    }

    pub fn basis(&self) -> &[Poly2D] {
        &self.basis
    }

    /// Dimension of the shape space.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn dofs(&self) -> &[DofFunctional] {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Nodal basis, one polynomial per DOF; the dropped DOF gets zero.
    pub fn nodal_basis(&self) -> &[Poly2D] {
        &self.nodal
    }

    /// Relation weights over all DOFs (interior entries zero).
    pub fn constraint(&self) -> Option<&[f64]> {
        self.constraint.as_deref()
    }

    /// The DOF left out of the nodal basis; its value follows from the relation.
    pub fn dropped_dof(&self) -> Option<usize> {
        self.dropped
    }

    /// `V[i][b]` = DOF `i` applied to basis polynomial `b`.
    pub fn vandermonde(&self) -> DMatrix<f64> {
        vandermonde(&self.dofs, &self.basis)
    }

    /// Evaluates `sum_j values[j] phi_j` at a reference point.
    pub fn eval(&self, values: &[f64], x: f64, y: f64) -> f64 {
        self.nodal.iter().zip(values).map(|(p, c)| c * p.eval(x, y)).sum()
    }

    /// Value and reference gradient of `sum_j values[j] phi_j`.
    pub fn eval_with_grad(&self, values: &[f64], x: f64, y: f64) -> (f64, f64, f64) {
        self.nodal.iter().zip(values).fold((0.0, 0.0, 0.0), |acc, (p, c)| {
            let (v, vx, vy) = p.eval_with_grad(x, y);
            (acc.0 + c * v, acc.1 + c * vx, acc.2 + c * vy)
        })
    }

    /// Fills in the dropped DOF so that the relation holds exactly.
    pub fn reconstruct_dropped(&self, values: &mut [f64]) {
        let (Some(d), Some(w)) = (self.dropped, &self.constraint) else {
            return;
        };
        let rest: f64 = w
            .iter()
            .zip(values.iter())
            .enumerate()
            .filter(|&(i, _)| i != d)
            .map(|(_, (wi, vi))| wi * vi)
            .sum();
        values[d] = -rest / w[d];
    }

    /// SVD-based rank and null-space data for the DOF/basis pairing.
    pub fn unisolvency(&self) -> UnisolvencyReport {
        unisolvency(&self.dofs, &self.basis)
    }
}

fn vandermonde(dofs: &[DofFunctional], basis: &[Poly2D]) -> DMatrix<f64> {
    DMatrix::from_fn(dofs.len(), basis.len(), |i, b| dofs[i].apply(&basis[b]))
}

fn unisolvency(dofs: &[DofFunctional], basis: &[Poly2D]) -> UnisolvencyReport {
    let v = vandermonde(dofs, basis);
    let (n, d) = v.shape();
    // pad to square so the SVD exposes the full left singular basis
    let size = n.max(d);
    let mut padded = DMatrix::zeros(size, size);
    padded.view_mut((0, 0), (n, d)).copy_from(&v);
    let svd = padded.svd(true, false);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).take(d.min(n)).collect();
    let rank = numerical_rank(&singular_values);
    let left_null = (n == d + 1 && rank == d).then(|| {
        let u = svd.u.as_ref().expect("requested U");
        // the smallest singular value belongs to the left null vector
        let idx = *order.last().expect("nonempty");
        u.column(idx).iter().copied().collect()
    });
    UnisolvencyReport {
        n_dofs: n,
        dim: d,
        rank,
        singular_values,
        left_null,
    }
}

/// Builds the reference element. For `ER` the boundary functionals follow
/// `dof_mode`; for `R` and `RPlus` the first point of `e2` is left out of the
/// nodal basis and recovered from the relation on demand.
pub fn build_reference_element(kind: ElementKind) -> Result<ReferenceElement> {
    let ElementKind { family, order: m, dof_mode } = kind;
    let construction = |message: String| Error::Construction {
        family: family.name(),
        order: m,
        message,
    };
    let basis = build_shape_space(family, m)?;
    let mut dofs = match dof_mode {
        DofMode::Point => boundary_dof_points(family, m)?,
        DofMode::Moment => edge_moment_dofs(m)?,
    };
    dofs.extend(interior_dof_points(family, m)?);
    let dim = basis.len();

    let (constraint, dropped) = if family.has_constraint() {
        let mut w = constraint_weights(family, m)?;
        w.resize(dofs.len(), 0.0);
        (Some(w), Some(m))
    } else {
        (None, None)
    };
    let retained: Vec<usize> = (0..dofs.len()).filter(|&i| Some(i) != dropped).collect();
    if retained.len() != dim {
        return Err(construction(format!(
            "{} retained functionals for a space of dimension {dim}",
            retained.len()
        )));
    }
    let report = unisolvency(&dofs, &basis);
    if report.rank != dim {
        return Err(construction(format!("Vandermonde rank {} < {dim}", report.rank)));
    }
    let square = DMatrix::from_fn(dim, dim, |r, b| dofs[retained[r]].apply(&basis[b]));
    let inverse = square
        .try_inverse()
        .ok_or_else(|| construction("retained Vandermonde block is singular".into()))?;

    let mut nodal = vec![Poly2D::zero(); dofs.len()];
    for (col, &dof) in retained.iter().enumerate() {
        nodal[dof] = basis
            .iter()
            .enumerate()
            .fold(Poly2D::zero(), |acc, (b, p)| &acc + &p.scale(inverse[(b, col)]));
    }
    Ok(ReferenceElement {
        kind,
        basis,
        dofs,
        nodal,
        constraint,
        dropped,
    })
}

/// Shared, lazily built reference element.
pub fn reference_element(kind: ElementKind) -> Result<Arc<ReferenceElement>> {
    static CACHE: OnceLock<Mutex<HashMap<ElementKind, Arc<ReferenceElement>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(el) = cache.lock().expect("element cache poisoned").get(&kind) {
        return Ok(Arc::clone(el));
    }
    // build outside the lock; a racing builder produces an identical element
    let built = Arc::new(build_reference_element(kind)?);
    let mut guard = cache.lock().expect("element cache poisoned");
    Ok(Arc::clone(guard.entry(kind).or_insert(built)))
}

/// Nodal values and reference gradients at the points of a tensor rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    /// `(x, y, weight)` per quadrature point.
    pub points: Vec<(f64, f64, f64)>,
    /// `values[q * n_dofs + j]`
    pub values: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub n_dofs: usize,
}

impl ReferenceElement {
    /// Tabulates the nodal basis on the tensor product of `rule` with itself.
    pub fn tabulate(&self, rule: &QuadRule1D) -> Tabulation {
        let points: Vec<(f64, f64, f64)> = rule
            .iter()
            .flat_map(|(x, wx)| rule.iter().map(move |(y, wy)| (x, y, wx * wy)))
            .collect();
        let n = self.n_dofs();
        let mut values = Vec::with_capacity(points.len() * n);
        let mut grad_x = Vec::with_capacity(points.len() * n);
        let mut grad_y = Vec::with_capacity(points.len() * n);
        for &(x, y, _) in &points {
            for phi in &self.nodal {
                let (v, vx, vy) = phi.eval_with_grad(x, y);
                values.push(v);
                grad_x.push(vx);
                grad_y.push(vy);
            }
        }
        Tabulation {
            points,
            values,
            grad_x,
            grad_y,
            n_dofs: n,
        }
    }
}
