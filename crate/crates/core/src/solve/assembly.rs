use nalgebra::DMatrix;
use rayon::prelude::*;
use sprs::TriMat;

use super::SparseSystem;
use crate::error::{Error, Result};
use crate::legendre1d::gauss_rule;
use crate::mesh::GeomMap;
use crate::refelem::{ReferenceElement, Tabulation};
use crate::space::GlobalSpace;

/// Gauss points per direction for assembly: `m + 3`.
pub const ASSEMBLY_EXTRA_POINTS: usize = 3;
/// Gauss points per direction for error norms: `m + 4`.
pub const ERROR_EXTRA_POINTS: usize = 4;

fn check_points(el: &ReferenceElement, points: usize) -> Result<()> {
    if points < el.order() + 2 {
        return Err(Error::InvalidArgument(format!(
            "{points} quadrature points per direction are too few for order {}",
            el.order()
        )));
    }
    Ok(())
}

/// Physical gradients of the nodal basis at one quadrature point.
fn physical_gradients(map: &GeomMap, tab: &Tabulation, q: usize, gx: &mut [f64], gy: &mut [f64]) -> Result<f64> {
    let (x, y, w) = tab.points[q];
    let jac = map.jacobian(x, y)?;
    let n = tab.n_dofs;
    for j in 0..n {
        let (a, b) = jac.pullback(tab.grad_x[q * n + j], tab.grad_y[q * n + j]);
        gx[j] = a;
        gy[j] = b;
    }
    Ok(w * jac.det)
}

/// Local stiffness and load, row-major `n x n` and `n`.
fn local_system<F: Fn(f64, f64) -> f64>(map: &GeomMap, tab: &Tabulation, f: &F) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = tab.n_dofs;
    let mut k = vec![0.0; n * n];
    let mut load = vec![0.0; n];
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    for q in 0..tab.points.len() {
        let dw = physical_gradients(map, tab, q, &mut gx, &mut gy)?;
        for i in 0..n {
            let (ax, ay) = (dw * gx[i], dw * gy[i]);
            let row = &mut k[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += ax * gx[j] + ay * gy[j];
            }
        }
        let (x, y, _) = tab.points[q];
        let (px, py) = map.map(x, y);
        let fw = dw * f(px, py);
        if fw != 0.0 {
            for (l, v) in load.iter_mut().zip(&tab.values[q * n..(q + 1) * n]) {
                *l += fw * v;
            }
        }
    }
    Ok((k, load))
}

/// `int_K grad phi_i . grad phi_j` by tensor Gauss quadrature with `points` nodes per direction.
pub fn element_stiffness(map: &GeomMap, el: &ReferenceElement, points: usize) -> Result<DMatrix<f64>> {
    check_points(el, points)?;
    let tab = el.tabulate(&gauss_rule(points)?);
    let n = el.n_dofs();
    let (k, _) = local_system(map, &tab, &|_, _| 0.0)?;
    Ok(DMatrix::from_row_slice(n, n, &k))
}

/// `int_K f phi_i`.
pub fn element_load<F: Fn(f64, f64) -> f64>(map: &GeomMap, el: &ReferenceElement, f: F, points: usize) -> Result<Vec<f64>> {
    check_points(el, points)?;
    let tab = el.tabulate(&gauss_rule(points)?);
    Ok(local_system(map, &tab, &f)?.1)
}

/// Stiffness matrix and load vector over the unknowns of `space`, with the
/// constraint rows attached for `R` and `RPlus`.
pub fn assemble<F>(space: &GlobalSpace, f: F, points: usize) -> Result<SparseSystem>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let el = space.reference();
    check_points(el, points)?;
    let tab = el.tabulate(&gauss_rule(points)?);
    let mesh = space.mesh();
    let locals: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| local_system(&mesh.geom_map(e), &tab, &f))
        .collect::<Result<_>>()?;

    let n = el.n_dofs();
    let nf = space.n_free();
    let mut tri = TriMat::with_capacity((nf, nf), locals.len() * n * n);
    let mut rhs = vec![0.0; nf];
    for (e, (k, load)) in locals.iter().enumerate() {
        let slots = space.element_slots(e);
        for (i, si) in slots.iter().enumerate() {
            let Some(fi) = si.free else { continue };
            rhs[fi] += si.sign * load[i];
            for (j, sj) in slots.iter().enumerate() {
                if let Some(fj) = sj.free {
                    let v = k[i * n + j];
                    if v != 0.0 {
                        tri.add_triplet(fi, fj, si.sign * sj.sign * v);
                    }
                }
            }
        }
    }
    let mut system = SparseSystem::new(tri.to_csr(), rhs);
    system.blocks = Some(
        (0..mesh.n_elements())
            .map(|e| space.element_slots(e).iter().filter_map(|s| s.free).collect())
            .collect(),
    );
    if let Some(c) = space.constraint_matrix() {
        system = system.with_constraint(c.clone(), space.redundant_row());
    }
    Ok(system)
}

/// `(|u - u_h|_{L2}, |u - u_h|_{H1,h})` by elementwise tensor Gauss quadrature.
pub fn error_norms<U, G>(space: &GlobalSpace, coeffs: &[f64], u: U, grad: G, points: usize) -> Result<(f64, f64)>
where
    U: Fn(f64, f64) -> f64 + Sync,
    G: Fn(f64, f64) -> (f64, f64) + Sync,
{
    let el = space.reference();
    check_points(el, points)?;
    let tab = el.tabulate(&gauss_rule(points)?);
    let mesh = space.mesh();
    let n = el.n_dofs();
    let parts: Vec<(f64, f64)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let map = mesh.geom_map(e);
            let c = space.local_values(coeffs, e);
            let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
            let (mut l2, mut h1) = (0.0, 0.0);
            for q in 0..tab.points.len() {
                let dw = physical_gradients(&map, &tab, q, &mut gx, &mut gy)?;
                let vals = &tab.values[q * n..(q + 1) * n];
                let uh: f64 = vals.iter().zip(&c).map(|(p, ci)| p * ci).sum();
                let ux: f64 = gx.iter().zip(&c).map(|(p, ci)| p * ci).sum();
                let uy: f64 = gy.iter().zip(&c).map(|(p, ci)| p * ci).sum();
                let (x, y, _) = tab.points[q];
                let (px, py) = map.map(x, y);
                let (ex, ey) = grad(px, py);
                l2 += dw * (u(px, py) - uh).powi(2);
                h1 += dw * ((ex - ux).powi(2) + (ey - uy).powi(2));
            }
            Ok((l2, h1))
        })
        .collect::<Result<_>>()?;
    let (l2, h1) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    Ok((l2.sqrt(), h1.sqrt()))
}
