//! Conforming quadrilateral meshes with bilinear element maps.
//!
//! Every edge carries a global orientation running from its lower to its
//! higher vertex index, so that both neighbours agree on the order of the
//! degrees of freedom placed on it.

pub mod io;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::legendre1d::gauss_rule;
use crate::refelem::LocalEdge;

pub use io::{load, save};

/// Reference corners `A1..A4` of `[-1, 1]^2`, counterclockwise.
pub const REFERENCE_CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Bilinear map of the reference square onto one quadrilateral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomMap {
    pub corners: [[f64; 2]; 4],
    /// Reported in degenerate-element errors.
    pub element: usize,
}

/// Jacobian `d(x, y) / d(x̂, ŷ)` of a [`GeomMap`], row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
}

impl Jacobian {
    /// Physical gradient `J^{-T} ĝ` from a reference gradient.
    pub fn pullback(&self, gx: f64, gy: f64) -> (f64, f64) {
        let [[a, b], [c, d]] = self.matrix;
        ((d * gx - c * gy) / self.det, (a * gy - b * gx) / self.det)
    }
}

fn shape_functions(xh: f64, yh: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xh) * (1.0 - yh),
        0.25 * (1.0 + xh) * (1.0 - yh),
        0.25 * (1.0 + xh) * (1.0 + yh),
        0.25 * (1.0 - xh) * (1.0 + yh),
    ]
}

impl GeomMap {
    pub fn new(corners: [[f64; 2]; 4]) -> Self {
        Self { corners, element: 0 }
    }

    pub fn map(&self, xh: f64, yh: f64) -> (f64, f64) {
        let n = shape_functions(xh, yh);
        let mut p = (0.0, 0.0);
        for (ni, c) in n.iter().zip(&self.corners) {
            p.0 += ni * c[0];
            p.1 += ni * c[1];
        }
        p
    }

    /// Jacobian without the positivity check.
    pub fn jacobian_unchecked(&self, xh: f64, yh: f64) -> Jacobian {
        let dx = [-(1.0 - yh), 1.0 - yh, 1.0 + yh, -(1.0 + yh)];
        let dy = [-(1.0 - xh), -(1.0 + xh), 1.0 + xh, 1.0 - xh];
        let mut m = [[0.0; 2]; 2];
        for i in 0..4 {
            for r in 0..2 {
                m[r][0] += 0.25 * dx[i] * self.corners[i][r];
                m[r][1] += 0.25 * dy[i] * self.corners[i][r];
            }
        }
        Jacobian {
            matrix: m,
            det: m[0][0] * m[1][1] - m[0][1] * m[1][0],
        }
    }

    /// Jacobian at `(x̂, ŷ)`, failing on a nonpositive determinant.
    pub fn jacobian(&self, xh: f64, yh: f64) -> Result<Jacobian> {
        let j = self.jacobian_unchecked(xh, yh);
        if j.det > 0.0 {
            Ok(j)
        } else {
            Err(Error::DegenerateElement {
                element: self.element,
                det: j.det,
            })
        }
    }

    /// Reference coordinates of a physical point, by Newton iteration.
    pub fn inverse(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (mut xh, mut yh) = (0.0, 0.0);
        for _ in 0..50 {
            let (px, py) = self.map(xh, yh);
            let (rx, ry) = (x - px, y - py);
            let j = self.jacobian_unchecked(xh, yh);
            if j.det == 0.0 {
                return None;
            }
            let [[a, b], [c, d]] = j.matrix;
            let dx = (d * rx - b * ry) / j.det;
            let dy = (a * ry - c * rx) / j.det;
            xh += dx;
            yh += dy;
            if dx.abs().max(dy.abs()) < 1e-15 {
                break;
            }
        }
        let (px, py) = self.map(xh, yh);
        let scale = self.diameter().max(f64::MIN_POSITIVE);
        ((px - x).hypot(py - y) <= 1e-12 * scale).then_some((xh, yh))
    }

    /// Distance between the midpoints of the two diagonals.
    pub fn bisection_defect(&self) -> f64 {
        let [a1, a2, a3, a4] = self.corners;
        let dx = 0.5 * (a1[0] + a3[0]) - 0.5 * (a2[0] + a4[0]);
        let dy = 0.5 * (a1[1] + a3[1]) - 0.5 * (a2[1] + a4[1]);
        dx.hypot(dy)
    }

    /// Length of the longer diagonal.
    pub fn diameter(&self) -> f64 {
        let [a1, a2, a3, a4] = self.corners;
        let d13 = (a3[0] - a1[0]).hypot(a3[1] - a1[1]);
        let d24 = (a4[0] - a2[0]).hypot(a4[1] - a2[1]);
        d13.max(d24)
    }
}

pub fn bisection_defect(map: &GeomMap) -> f64 {
    map.bisection_defect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, lower index first.
    pub vertices: (usize, usize),
    pub left: (usize, LocalEdge),
    pub right: Option<(usize, LocalEdge)>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    vertices: Vec<[f64; 2]>,
    quads: Vec<[usize; 4]>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 4]>,
}

impl QuadMesh {
    /// Builds the edge table and validates orientation and convexity.
    pub fn new(vertices: Vec<[f64; 2]>, quads: Vec<[usize; 4]>) -> Result<Self> {
        let nv = vertices.len();
        for (e, q) in quads.iter().enumerate() {
            if let Some(&bad) = q.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {e} references missing vertex {bad}")));
            }
            for i in 0..4 {
                if q[(i + 1)..].contains(&q[i]) {
                    return Err(Error::InvalidMesh(format!("element {e} repeats vertex {}", q[i])));
                }
            }
            let map = GeomMap {
                corners: q.map(|v| vertices[v]),
                element: e,
            };
            for &(xh, yh) in &REFERENCE_CORNERS {
                let det = map.jacobian_unchecked(xh, yh).det;
                if det <= 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} is not strictly convex and counterclockwise (corner jacobian {det:.3e})"
                    )));
                }
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut element_edges = Vec::with_capacity(quads.len());
        for (e, q) in quads.iter().enumerate() {
            let mut ids = [0; 4];
            for local in LocalEdge::ALL {
                let (a, b) = local.vertices();
                let (va, vb) = (q[a], q[b]);
                let key = (va.min(vb), va.max(vb));
                let id = match lookup.get(&key) {
                    None => {
                        lookup.insert(key, edges.len());
                        edges.push(Edge {
                            vertices: key,
                            left: (e, local),
                            right: None,
                        });
                        edges.len() - 1
                    }
                    Some(&id) => {
                        let edge = &mut edges[id];
                        if edge.right.is_some() {
                            return Err(Error::InvalidMesh(format!(
                                "edge {key:?} is shared by more than two elements"
                            )));
                        }
                        edge.right = Some((e, local));
                        id
                    }
                };
                ids[local.index()] = id;
            }
            element_edges.push(ids);
        }
        let mesh = Self {
            vertices,
            quads,
            edges,
            element_edges,
        };
        // a consistently oriented conforming mesh traverses each interior edge once in each direction
        for edge in mesh.edges.iter().filter(|e| !e.is_boundary()) {
            let (l, ll) = edge.left;
            let (r, rl) = edge.right.unwrap();
            let ccw = |e, local| mesh.local_agrees(e, local) ^ matches!(local, LocalEdge::Left | LocalEdge::Top);
            if ccw(l, ll) == ccw(r, rl) {
                return Err(Error::InvalidMesh(format!(
                    "elements {l} and {r} traverse edge {:?} in the same direction",
                    edge.vertices
                )));
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn quads(&self) -> &[[usize; 4]] {
        &self.quads
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_elements(&self) -> usize {
        self.quads.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.n_edges() - self.n_boundary_edges()
    }

    fn boundary_vertex_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            flags[e.vertices.0] = true;
            flags[e.vertices.1] = true;
        }
        flags
    }

    pub fn n_boundary_vertices(&self) -> usize {
        self.boundary_vertex_flags().iter().filter(|&&b| b).count()
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.n_vertices() - self.n_boundary_vertices()
    }

    /// Both Euler relations for simply connected meshes:
    /// `4 N_E = 2 N_S^i + N_S^b` and `2 N_E = 2 N_V^i + N_V^b - 2`.
    pub fn satisfies_euler(&self) -> bool {
        let ne = self.n_elements() as i64;
        let (si, sb) = (self.n_interior_edges() as i64, self.n_boundary_edges() as i64);
        let (vi, vb) = (self.n_interior_vertices() as i64, self.n_boundary_vertices() as i64);
        4 * ne == 2 * si + sb && 2 * ne == 2 * vi + vb - 2
    }

    pub fn geom_map(&self, element: usize) -> GeomMap {
        GeomMap {
            corners: self.quads[element].map(|v| self.vertices[v]),
            element,
        }
    }

    /// Global edge index of a local edge.
    pub fn element_edge(&self, element: usize, local: LocalEdge) -> usize {
        self.element_edges[element][local.index()]
    }

    /// Whether the local edge parameter increases along the global edge orientation.
    pub fn local_agrees(&self, element: usize, local: LocalEdge) -> bool {
        let q = &self.quads[element];
        let (a, b) = local.vertices();
        q[a] < q[b]
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.geom_map(e).diameter()).fold(0.0, f64::max)
    }

    pub fn max_bisection_defect(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.geom_map(e).bisection_defect())
            .fold(0.0, f64::max)
    }

    /// Smallest Jacobian determinant over an `n x n` sample grid on every element.
    pub fn min_jacobian(&self, samples: usize) -> f64 {
        let s = samples.max(2);
        let t = |i: usize| -1.0 + 2.0 * i as f64 / (s - 1) as f64;
        (0..self.n_elements())
            .flat_map(|e| {
                let map = self.geom_map(e);
                (0..s * s).map(move |k| map.jacobian_unchecked(t(k / s), t(k % s)).det)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Images of the `m` Gauss points of an edge, ordered from its lower
    /// to its higher vertex index.
    pub fn edge_gauss_points(&self, edge: usize, m: usize) -> Result<Vec<(f64, f64)>> {
        let (a, b) = self.edges[edge].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let rule = gauss_rule(m)?;
        Ok(rule
            .nodes()
            .iter()
            .map(|&t| {
                let (s0, s1) = (0.5 * (1.0 - t), 0.5 * (1.0 + t));
                (s0 * pa[0] + s1 * pb[0], s0 * pa[1] + s1 * pb[1])
            })
            .collect())
    }
}

/// `n x n` congruent rectangles; vertex `(i, j)` has index `j (n + 1) + i`.
pub fn uniform_rect_mesh(n: usize, domain: Rect) -> Result<QuadMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one subdivision is required".into()));
    }
    let (hx, hy) = ((domain.x1 - domain.x0) / n as f64, (domain.y1 - domain.y0) / n as f64);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { domain.x1 } else { domain.x0 + i as f64 * hx };
            let y = if j == n { domain.y1 } else { domain.y0 + j as f64 * hy };
            vertices.push([x, y]);
        }
    }
    QuadMesh::new(vertices, grid_quads(n))
}

fn grid_quads(n: usize) -> Vec<[usize; 4]> {
    let v = |i: usize, j: usize| j * (n + 1) + i;
    let mut quads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            quads.push([v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    quads
}

const PERTURB_RETRIES: usize = 5;

/// A mesh of the unit square whose elements satisfy the bisection
/// condition with a defect of order `h^2`.
///
/// The interior vertex of a `2 x 2` mesh is shifted by up to
/// `amplitude * h` in each direction and the result is refined by repeated
/// midpoint subdivision to `n x n` elements (`n` a power of two). The
/// refined vertices are the coarse bilinear maps evaluated at dyadic points,
/// so the vertex numbering matches [`uniform_rect_mesh`].
pub fn perturbed_mesh(n: usize, seed: u64, amplitude: f64) -> Result<QuadMesh> {
    if !(0.0..=0.3).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} outside [0, 0.3]")));
    }
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("perturbed meshes need a power of two, got {n}")));
    }
    if n == 1 {
        return uniform_rect_mesh(1, Rect::UNIT);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
    let mut amp = amplitude;
    let mut last_err = None;
    for _ in 0..=PERTURB_RETRIES {
        match refine_coarse(n, [0.5 + amp * 0.5 * shift[0], 0.5 + amp * 0.5 * shift[1]]) {
            Ok(mesh) if mesh.min_jacobian(5) > 0.0 => return Ok(mesh),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
        amp *= 0.5;
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidMesh("perturbation keeps producing degenerate elements".into())))
}

fn refine_coarse(n: usize, centre: [f64; 2]) -> Result<QuadMesh> {
    let coarse = |ci: usize, cj: usize| -> GeomMap {
        let c = |i: usize, j: usize| -> [f64; 2] {
            if i == 1 && j == 1 {
                centre
            } else {
                [0.5 * i as f64, 0.5 * j as f64]
            }
        };
        GeomMap::new([c(ci, cj), c(ci + 1, cj), c(ci + 1, cj + 1), c(ci, cj + 1)])
    };
    let half = n / 2;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (ci, cj) = ((i / half).min(1), (j / half).min(1));
            let t = |k: usize, c: usize| 2.0 * (k - c * half) as f64 / half as f64 - 1.0;
            let (x, y) = coarse(ci, cj).map(t(i, ci), t(j, cj));
            vertices.push([x, y]);
        }
    }
    QuadMesh::new(vertices, grid_quads(n))
}
