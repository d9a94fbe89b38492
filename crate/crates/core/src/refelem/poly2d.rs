use std::ops::{Add, Mul, Sub};

use crate::legendre1d::Poly1D;

use super::LocalEdge;

/// A bivariate polynomial stored as a dense table of monomial coefficients.
///
/// `coeff(i, j)` multiplies `x^i y^j`; the table is square with side
/// `size`, so both partial degrees are below `size`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2D {
    size: usize,
    coeffs: Vec<f64>,
}

impl Poly2D {
    pub fn zero() -> Self {
        Self::default()
    }

    fn with_size(size: usize) -> Self {
        Self {
            size,
            coeffs: vec![0.0; size * size],
        }
    }

    /// `c x^i y^j`.
    pub fn monomial(i: usize, j: usize, c: f64) -> Self {
        let mut p = Self::with_size(i.max(j) + 1);
        p.set(i, j, c);
        p
    }

    /// Sum of `c x^i y^j` over the given terms.
    pub fn from_terms(terms: &[(usize, usize, f64)]) -> Self {
        let size = terms.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
        let mut p = Self::with_size(size);
        for &(i, j, c) in terms {
            p.coeffs[i * size + j] += c;
        }
        p
    }

    /// Tensor product `a(x) b(y)`.
    pub fn tensor(a: &Poly1D, b: &Poly1D) -> Self {
        let size = a.coeffs().len().max(b.coeffs().len());
        let mut p = Self::with_size(size);
        for (i, ca) in a.coeffs().iter().enumerate() {
            for (j, cb) in b.coeffs().iter().enumerate() {
                p.coeffs[i * size + j] = ca * cb;
            }
        }
        p
    }

    fn grow(&mut self, size: usize) {
        if size <= self.size {
            return;
        }
        let mut coeffs = vec![0.0; size * size];
        for i in 0..self.size {
            for j in 0..self.size {
                coeffs[i * size + j] = self.coeffs[i * self.size + j];
            }
        }
        self.size = size;
        self.coeffs = coeffs;
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i < self.size && j < self.size {
            self.coeffs[i * self.size + j]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, c: f64) {
        self.grow(i.max(j) + 1);
        self.coeffs[i * self.size + j] = c;
    }

    /// Iterator over the nonzero terms as `(i, j, c)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let size = self.size;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(move |(idx, &c)| (idx / size, idx % size, c))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.size;
        (0..n).rev().fold(0.0, |acc, i| {
            let row = &self.coeffs[i * n..(i + 1) * n];
            acc * x + row.iter().rev().fold(0.0, |a, &c| a * y + c)
        })
    }

    /// Value and gradient `(p, dp/dx, dp/dy)`.
    pub fn eval_with_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let n = self.size;
        let (mut v, mut vx, mut vy) = (0.0, 0.0, 0.0);
        for i in (0..n).rev() {
            let row = &self.coeffs[i * n..(i + 1) * n];
            let (mut r, mut ry) = (0.0, 0.0);
            for &c in row.iter().rev() {
                ry = ry * y + r;
                r = r * y + c;
            }
            vx = vx * x + v;
            v = v * x + r;
            vy = vy * x + ry;
        }
        (v, vx, vy)
    }

    pub fn derivative_x(&self) -> Self {
        Self::from_terms(
            &self
                .terms()
                .filter(|&(i, _, _)| i > 0)
                .map(|(i, j, c)| (i - 1, j, c * i as f64))
                .collect::<Vec<_>>(),
        )
    }

    pub fn derivative_y(&self) -> Self {
        Self::from_terms(
            &self
                .terms()
                .filter(|&(_, j, _)| j > 0)
                .map(|(i, j, c)| (i, j - 1, c * j as f64))
                .collect::<Vec<_>>(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            size: self.size,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Total degree, ignoring coefficients with magnitude `<= tol`.
    pub fn total_degree(&self, tol: f64) -> Option<usize> {
        self.terms()
            .filter(|t| t.2.abs() > tol)
            .map(|(i, j, _)| i + j)
            .max()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Restriction to a reference edge as a polynomial in the edge parameter
    /// (`y` on the vertical edges, `x` on the horizontal ones).
    pub fn trace(&self, edge: LocalEdge) -> Poly1D {
        let n = self.size;
        let mut out = vec![0.0; n];
        match edge {
            LocalEdge::Left | LocalEdge::Right => {
                let x = if edge == LocalEdge::Left { -1.0 } else { 1.0 };
                for (i, j, c) in self.terms() {
                    out[j] += c * x_pow(x, i);
                }
            }
            LocalEdge::Bottom | LocalEdge::Top => {
                let y = if edge == LocalEdge::Bottom { -1.0 } else { 1.0 };
                for (i, j, c) in self.terms() {
                    out[i] += c * x_pow(y, j);
                }
            }
        }
        Poly1D::new(out)
    }

    /// Divides by the bubble `(1 - x^2)(1 - y^2)`, returning the quotient and
    /// the remainder `self - bubble * quotient`.
    pub fn div_rem_bubble(&self) -> (Self, Self) {
        // synthetic division by (1 - x^2) in x, then by (1 - y^2) in y
        let n = self.size;
        let mut work = self.clone();
        let mut qx = Self::with_size(n);
        for i in (2..n).rev() {
            for j in 0..n {
                let c = work.coeff(i, j);
                if c != 0.0 {
                    // c x^i = -c x^{i-2} (1 - x^2) + c x^{i-2}
                    qx.coeffs[(i - 2) * n + j] -= c;
                    work.coeffs[i * n + j] = 0.0;
                    work.coeffs[(i - 2) * n + j] += c;
                }
            }
        }
        let mut q = Self::with_size(n);
        let mut work_q = qx;
        for j in (2..n).rev() {
            for i in 0..n {
                let c = work_q.coeff(i, j);
                if c != 0.0 {
                    q.coeffs[i * n + j - 2] -= c;
                    work_q.coeffs[i * n + j] = 0.0;
                    work_q.coeffs[i * n + j - 2] += c;
                }
            }
        }
        let rem = self - &(&bubble() * &q);
        (q, rem)
    }
}

fn x_pow(x: f64, i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        x
    }
}

/// The continuous bubble `(1 - x^2)(1 - y^2)`.
pub fn bubble() -> Poly2D {
    Poly2D::from_terms(&[(0, 0, 1.0), (2, 0, -1.0), (0, 2, -1.0), (2, 2, 1.0)])
}

impl Add for &Poly2D {
    type Output = Poly2D;

    fn add(self, rhs: &Poly2D) -> Poly2D {
        let mut out = self.clone();
        out.grow(rhs.size);
        for (i, j, c) in rhs.terms() {
            let s = out.size;
            out.coeffs[i * s + j] += c;
        }
        out
    }
}

impl Sub for &Poly2D {
    type Output = Poly2D;

    fn sub(self, rhs: &Poly2D) -> Poly2D {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &Poly2D {
    type Output = Poly2D;

    fn mul(self, rhs: &Poly2D) -> Poly2D {
        if self.size == 0 || rhs.size == 0 {
            return Poly2D::zero();
        }
        let size = self.size + rhs.size - 1;
        let mut out = Poly2D::with_size(size);
        for (i, j, a) in self.terms() {
            for (k, l, b) in rhs.terms() {
                out.coeffs[(i + k) * size + j + l] += a * b;
            }
        }
        out
    }
}
