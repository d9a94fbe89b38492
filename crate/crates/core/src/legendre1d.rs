//! One-dimensional Legendre machinery on [-1, 1].
//!
//! Everything here is a pure function of its arguments. Polynomials are kept
//! in the monomial basis so that traces of two-dimensional shape functions can
//! be compared coefficient by coefficient.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Newton iterations allowed per root before giving up.
const MAX_NEWTON_ITERATIONS: usize = 100;

/// Points of the fallback rule used by [`l2_project_1d`] for general integrands.
pub const DEFAULT_PROJECTION_POINTS: usize = 24;

/// A real polynomial in one variable, `coeffs[i]` multiplying `x^i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly1D {
    coeffs: Vec<f64>,
}

impl Poly1D {
    /// Builds a polynomial, dropping exact trailing zeros.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `x^n`.
    pub fn monomial(n: usize) -> Self {
        let mut coeffs = vec![0.0; n + 1];
        coeffs[n] = 1.0;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^i`; zero past the stored length.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    /// Exact degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Degree after discarding coefficients with magnitude `<= tol`.
    pub fn effective_degree(&self, tol: f64) -> Option<usize> {
        self.coeffs.iter().rposition(|c| c.abs() > tol)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl Add for &Poly1D {
    type Output = Poly1D;

    fn add(self, rhs: &Poly1D) -> Poly1D {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly1D::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &Poly1D {
    type Output = Poly1D;

    fn sub(self, rhs: &Poly1D) -> Poly1D {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly1D::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &Poly1D {
    type Output = Poly1D;

    fn mul(self, rhs: &Poly1D) -> Poly1D {
        if self.is_zero() || rhs.is_zero() {
            return Poly1D::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly1D::new(out)
    }
}

/// `L_n(x)` by the three-term recurrence.
pub fn legendre_eval(n: usize, x: f64) -> f64 {
    legendre_eval_with_derivative(n, x).0
}

/// `(L_n(x), L_n'(x))`, both by recurrence so the endpoints are safe.
pub fn legendre_eval_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        // L'_{k+1} = L'_{k-1} + (2k+1) L_k
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Monomial expansion of `L_n`.
pub fn legendre_poly(n: usize) -> Poly1D {
    let mut prev = Poly1D::constant(1.0);
    if n == 0 {
        return prev;
    }
    let x = Poly1D::monomial(1);
    let mut cur = x.clone();
    for k in 1..n {
        let kf = k as f64;
        let next = &(&x * &cur).scale((2.0 * kf + 1.0) / (kf + 1.0)) - &prev.scale(kf / (kf + 1.0));
        prev = cur;
        cur = next;
    }
    cur
}

/// Leading coefficient of `L_n`, `(2n)! / (2^n (n!)^2)`, accumulated as a
/// running product so it stays finite well past factorial overflow.
pub fn legendre_leading_coeff(n: usize) -> f64 {
    // c_{k} = c_{k-1} * (2k-1) / k
    (1..=n).fold(1.0, |c, k| c * (2 * k - 1) as f64 / k as f64)
}

/// A quadrature rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule1D {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// The `n`-point Gauss-Legendre rule, nodes in increasing order.
///
/// Roots come from Newton's method seeded with `cos(pi (4i-1) / (4n+2))`;
/// the computed node set is then symmetrized so that `x_i = -x_{n-1-i}`
/// holds exactly.
pub fn gauss_rule(n: usize) -> Result<QuadRule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument("Gauss rule needs at least one point".into()));
    }
    let half = n.div_ceil(2);
    let mut positive = Vec::with_capacity(half);
    for i in 1..=half {
        let mut x = (PI * (4 * i - 1) as f64 / (4 * n + 2) as f64).cos();
        let mut converged = false;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let (p, dp) = legendre_eval_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 4.0 * f64::EPSILON {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::GaussNewton { n });
        }
        positive.push(x);
    }
    if n % 2 == 1 {
        // the seed for the middle root sits at pi/2 already; pin it
        *positive.last_mut().expect("n >= 1") = 0.0;
    }
    // positive is decreasing: largest root first
    let mut nodes = Vec::with_capacity(n);
    nodes.extend(positive.iter().map(|x| -x));
    let mirror_start = if n % 2 == 1 { half - 1 } else { half };
    nodes.extend(positive[..mirror_start].iter().rev().copied());
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (_, dp) = legendre_eval_with_derivative(n, x);
            2.0 / ((1.0 - x * x) * dp * dp)
        })
        .collect();
    Ok(QuadRule1D { nodes, weights })
}

/// `n >= 2` Gauss-Lobatto nodes: the endpoints plus the roots of `L'_{n-1}`.
pub fn gauss_lobatto_nodes(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument("Gauss-Lobatto rule needs at least two points".into()));
    }
    let deg = n - 1;
    let nf = deg as f64;
    let mut nodes = vec![-1.0; n];
    nodes[n - 1] = 1.0;
    for j in 1..deg {
        // Newton on q = (1 - x^2) L'_N = N (L_{N-1} - x L_N), q' = -N (N+1) L_N
        let mut x = -(PI * j as f64 / nf).cos();
        let mut converged = false;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let p = legendre_eval(deg, x);
            let p_prev = legendre_eval(deg - 1, x);
            let q = nf * (p_prev - x * p);
            let dq = -nf * (nf + 1.0) * p;
            let dx = q / dq;
            x -= dx;
            if dx.abs() <= 4.0 * f64::EPSILON {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::GaussNewton { n });
        }
        nodes[j] = x;
    }
    for j in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - j] - nodes[j]);
        nodes[j] = -s;
        nodes[n - 1 - j] = s;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(nodes)
}

/// The `i`-th Lagrange cardinal function on `nodes`, evaluated at `x`.
///
/// Panics when two nodes coincide.
pub fn lagrange_basis(nodes: &[f64], i: usize, x: f64) -> f64 {
    let xi = nodes[i];
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| {
            assert!(xi != xj, "lagrange_basis: duplicate node {xj}");
            (x - xj) / (xi - xj)
        })
        .product()
}

/// The `i`-th Lagrange cardinal function on `nodes`, expanded in monomials.
pub fn lagrange_poly(nodes: &[f64], i: usize) -> Poly1D {
    let xi = nodes[i];
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(Poly1D::constant(1.0), |acc, (_, &xj)| {
            assert!(xi != xj, "lagrange_poly: duplicate node {xj}");
            let factor = Poly1D::new(vec![-xj / (xi - xj), 1.0 / (xi - xj)]);
            &acc * &factor
        })
}

/// `L^2(-1,1)` projection of `f` onto polynomials of degree `<= degree`.
///
/// Uses `max(degree + 2, DEFAULT_PROJECTION_POINTS)` Gauss points, which is
/// exact for polynomial `f` up to degree `degree + 3` and accurate for smooth `f`.
pub fn l2_project_1d<F: Fn(f64) -> f64>(f: F, degree: usize) -> Poly1D {
    let rule = gauss_rule((degree + 2).max(DEFAULT_PROJECTION_POINTS))
        .expect("Gauss rule of moderate size always converges");
    l2_project_1d_with(f, degree, &rule)
}

/// [`l2_project_1d`] with a caller-chosen quadrature rule.
pub fn l2_project_1d_with<F: Fn(f64) -> f64>(f: F, degree: usize, rule: &QuadRule1D) -> Poly1D {
    let samples: Vec<(f64, f64, f64)> = rule.iter().map(|(x, w)| (x, w, f(x))).collect();
    (0..=degree).fold(Poly1D::zero(), |acc, j| {
        let moment: f64 = samples
            .iter()
            .map(|&(x, w, fx)| w * fx * legendre_eval(j, x))
            .sum();
        let c = moment * (2 * j + 1) as f64 / 2.0;
        &acc + &legendre_poly(j).scale(c)
    })
}

/// Interpolant of `v` in `P_{m-1}` through the `m` Gauss points (`m` odd).
pub fn interp_gauss_1d<F: Fn(f64) -> f64>(v: F, m: usize) -> Poly1D {
    assert!(m % 2 == 1, "interp_gauss_1d expects an odd order, got {m}");
    let rule = gauss_rule(m).expect("Gauss rule of moderate size always converges");
    let nodes = rule.nodes();
    (0..m).fold(Poly1D::zero(), |acc, i| {
        &acc + &lagrange_poly(nodes, i).scale(v(nodes[i]))
    })
}
