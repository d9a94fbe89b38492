use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use super::{SolveReport, SparseSystem};
use crate::error::{Error, Result};

const PARALLEL_ROWS: usize = 20_000;

/// `y = A x` for a CSR matrix. Rows are summed serially, so the result does
/// not depend on the number of threads.
pub fn spmv(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    assert!(a.is_csr(), "spmv expects CSR storage");
    let indptr = a.indptr();
    let ptr = indptr.raw_storage();
    let (idx, val) = (a.indices(), a.data());
    let row = |i: usize| -> f64 { (ptr[i]..ptr[i + 1]).map(|k| val[k] * x[idx[k]]).sum() };
    if y.len() >= PARALLEL_ROWS {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
    } else {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = row(i);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inverse_diagonal(a: &CsMat<f64>) -> Vec<f64> {
    a.diag()
        .to_dense()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

struct CgOutcome {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Symmetric positive definite approximation of `A^{-1}`.
enum Preconditioner {
    Jacobi(Vec<f64>),
    /// Additive Schwarz over overlapping index blocks: `sum_e R_e^T A_ee^{-1} R_e`.
    Blocks(Vec<(Vec<usize>, Cholesky<f64, Dyn>)>),
}

impl Preconditioner {
    fn new(a: &CsMat<f64>, blocks: Option<&[Vec<usize>]>) -> Self {
        let Some(blocks) = blocks else {
            return Preconditioner::Jacobi(inverse_diagonal(a));
        };
        let factors: Option<Vec<_>> = blocks
            .par_iter()
            .filter(|b| !b.is_empty())
            .map(|idx| {
                let mut sub = DMatrix::<f64>::zeros(idx.len(), idx.len());
                for (r, &i) in idx.iter().enumerate() {
                    let row = a.outer_view(i)?;
                    for (j, &v) in row.iter() {
                        if let Some(c) = idx.iter().position(|&k| k == j) {
                            sub[(r, c)] = v;
                        }
                    }
                }
                Some((idx.clone(), sub.cholesky()?))
            })
            .collect();
        match factors {
            Some(f) => Preconditioner::Blocks(f),
            None => Preconditioner::Jacobi(inverse_diagonal(a)),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Jacobi(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Blocks(blocks) => {
                let local: Vec<DVector<f64>> = blocks
                    .par_iter()
                    .map(|(idx, chol)| chol.solve(&DVector::from_iterator(idx.len(), idx.iter().map(|&i| r[i]))))
                    .collect();
                z.fill(0.0);
                for ((idx, _), v) in blocks.iter().zip(&local) {
                    for (&i, vi) in idx.iter().zip(v.iter()) {
                        z[i] += vi;
                    }
                }
            }
        }
    }
}

/// Preconditioned CG on `a x = b`, stopping at `|r| <= tol |b|`.
fn pcg(a: &CsMat<f64>, b: &[f64], m: &Preconditioner, tol: f64, max_iter: usize) -> CgOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        spmv(a, &p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return CgOutcome {
                x,
                iterations: it,
                converged: false,
            };
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) <= tol * bnorm {
            return CgOutcome {
                x,
                iterations: it,
                converged: true,
            };
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        x,
        iterations: max_iter,
        converged: false,
    }
}

fn relative_residual(a: &CsMat<f64>, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    spmv(a, x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bn = norm(b);
    if bn == 0.0 {
        norm(&r)
    } else {
        norm(&r) / bn
    }
}

fn constraint_residual(c: Option<&CsMat<f64>>, x: &[f64]) -> f64 {
    c.map_or(0.0, |c| {
        let mut cx = vec![0.0; c.rows()];
        spmv(c, x, &mut cx);
        cx.iter().fold(0.0, |m, v| m.max(v.abs()))
    })
}

fn effective_rows(system: &SparseSystem) -> Vec<usize> {
    let Some(c) = &system.constraint else {
        return Vec::new();
    };
    (0..c.rows())
        .filter(|&i| Some(i) != system.redundant_row)
        .filter(|&i| c.outer_view(i).is_some_and(|row| row.data().iter().any(|&v| v != 0.0)))
        .collect()
}

/// Preconditioned CG for a system without constraints.
pub fn solve_unconstrained(system: &SparseSystem) -> Result<(Vec<f64>, SolveReport)> {
    if !effective_rows(system).is_empty() {
        return Err(Error::InvalidArgument("system carries constraints; use solve_constrained".into()));
    }
    let start = Instant::now();
    let s = &system.settings;
    let max_iter = s.max_iterations(system.n());
    let m = Preconditioner::new(&system.matrix, system.blocks.as_deref());
    let out = pcg(&system.matrix, &system.rhs, &m, s.tol, max_iter);
    let report = SolveReport {
        iterations: out.iterations,
        relative_residual: relative_residual(&system.matrix, &out.x, &system.rhs),
        constraint_residual: constraint_residual(system.constraint.as_ref(), &out.x),
        seconds: start.elapsed().as_secs_f64(),
    };
    if !out.converged {
        return Err(Error::SolverFailed {
            message: format!("CG stopped after {} iterations", out.iterations),
            report,
        });
    }
    Ok((out.x, report))
}

/// Orthogonal projection onto `ker C` through an inner CG on `C C^T`.
struct Projector {
    c: CsMat<f64>,
    ct: CsMat<f64>,
    cct: CsMat<f64>,
    jacobi: Preconditioner,
    tol: f64,
    max_iter: usize,
}

impl Projector {
    fn new(c: CsMat<f64>, tol: f64) -> Self {
        let ct = c.transpose_view().to_csr();
        let cct: CsMat<f64> = (&c * &ct).to_csr();
        let jacobi = Preconditioner::Jacobi(inverse_diagonal(&cct));
        let max_iter = (40.0 * (c.rows() as f64).sqrt()).ceil() as usize + 50;
        Self {
            c,
            ct,
            cct,
            jacobi,
            tol,
            max_iter,
        }
    }

    fn apply(&self, v: &mut [f64]) -> Result<usize> {
        let mut cv = vec![0.0; self.c.rows()];
        spmv(&self.c, v, &mut cv);
        let out = pcg(&self.cct, &cv, &self.jacobi, self.tol, self.max_iter);
        if !out.converged {
            return Err(Error::SolverFailed {
                message: format!("inner projection solve stopped after {} iterations", out.iterations),
                report: SolveReport::default(),
            });
        }
        let mut ctl = vec![0.0; v.len()];
        spmv(&self.ct, &out.x, &mut ctl);
        for (vi, ci) in v.iter_mut().zip(&ctl) {
            *vi -= ci;
        }
        Ok(out.iterations)
    }
}

/// Projected preconditioned CG on `ker C`.
///
/// Search directions are `P M^{-1} r` with `P` the orthogonal projector onto
/// `ker C`; the projection drops the redundant row and all empty rows so that
/// `C C^T` is definite.
pub fn solve_constrained(system: &SparseSystem) -> Result<(Vec<f64>, SolveReport)> {
    let rows = effective_rows(system);
    if rows.is_empty() {
        let (x, mut report) = solve_unconstrained(&SparseSystem {
            constraint: None,
            ..system.clone()
        })?;
        report.constraint_residual = constraint_residual(system.constraint.as_ref(), &x);
        return Ok((x, report));
    }
    let start = Instant::now();
    let settings = &system.settings;
    let n = system.n();
    let a = &system.matrix;
    let c = system.constraint.as_ref().unwrap();
    let mut tri = TriMat::new((rows.len(), n));
    for (r, &i) in rows.iter().enumerate() {
        if let Some(row) = c.outer_view(i) {
            for (j, &v) in row.iter() {
                tri.add_triplet(r, j, v);
            }
        }
    }
    let proj = Projector::new(tri.to_csr(), settings.inner_tol);
    let m = Preconditioner::new(a, system.blocks.as_deref());
    let fail = |message: String, iterations: usize| Error::SolverFailed {
        message,
        report: SolveReport {
            iterations,
            seconds: start.elapsed().as_secs_f64(),
            ..SolveReport::default()
        },
    };
    let project = |v: &mut [f64], it: usize| proj.apply(v).map(|_| ()).map_err(|e| fail(e.to_string(), it));

    let mut x = vec![0.0; n];
    let mut r = system.rhs.clone();
    project(&mut r, 0)?;
    let norm0 = norm(&r);
    let max_iter = settings.max_iterations(n);
    let mut iterations = 0;
    let mut converged = norm0 == 0.0;
    if !converged {
        let mut z = vec![0.0; n];
        m.apply(&r, &mut z);
        project(&mut z, 0)?;
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            spmv(a, &p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                return Err(fail("operator is not positive on the constraint kernel".into(), iterations));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            project(&mut r, iterations)?;
            if norm(&r) <= settings.tol * norm0 {
                converged = true;
                break;
            }
            m.apply(&r, &mut z);
            project(&mut z, iterations)?;
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    // clean up drift from the inexact projections
    project(&mut x, iterations)?;

    let mut g = vec![0.0; n];
    spmv(a, &x, &mut g);
    for i in 0..n {
        g[i] = system.rhs[i] - g[i];
    }
    project(&mut g, iterations)?;
    let report = SolveReport {
        iterations,
        relative_residual: if norm0 == 0.0 { norm(&g) } else { norm(&g) / norm0 },
        constraint_residual: constraint_residual(Some(c), &x),
        seconds: start.elapsed().as_secs_f64(),
    };
    if !converged {
        return Err(Error::SolverFailed {
            message: format!("projected CG stopped after {iterations} iterations"),
            report,
        });
    }
    if report.constraint_residual > settings.constraint_tol {
        return Err(Error::SolverFailed {
            message: "solution violates the constraints".into(),
            report,
        });
    }
    Ok((x, report))
}

/// Dispatches on the presence of constraints.
pub fn solve(system: &SparseSystem) -> Result<(Vec<f64>, SolveReport)> {
    if system.constraint.is_some() {
        solve_constrained(system)
    } else {
        solve_unconstrained(system)
    }
}
