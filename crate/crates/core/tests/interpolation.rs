use std::sync::Arc;

use nalgebra::DMatrix;
use ncquad::legendre1d::{gauss_lobatto_nodes, gauss_rule, lagrange_basis, legendre_eval};
use ncquad::study::{run_interpolation_study, ExactSolution, MeshKind, StudyConfig};
use ncquad::{interpolate, perturbed_mesh, uniform_rect_mesh, DofMode, ElementKind, Family, GlobalSpace, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least-squares slope of `-log2 e` against the level.
fn fitted_order(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let xs: Vec<f64> = (0..errors.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|e| -e.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn broken_h1_interpolation_order() {
    let kinds = [
        (Family::R, 1),
        (Family::R, 3),
        (Family::ER, 1),
        (Family::ER, 3),
        (Family::RPLUS, 2),
        (Family::RPLUS, 4),
    ];
    for mesh in [MeshKind::Uniform, MeshKind::Perturbed] {
        for (family, m) in kinds {
            let mut c = StudyConfig::new(family, m, 5);
            c.first_level = 2;
            c.mesh = mesh;
            c.amplitude = 0.2;
            c.seed = 1;
            c.solution = ExactSolution::SinSin;
            let rows = run_interpolation_study(&c).unwrap();
            let h1: Vec<f64> = rows.iter().map(|r| r.h1_err).collect();
            let slope = fitted_order(&h1);
            assert!(slope >= m as f64 - 0.1, "{family}_{m} {mesh:?}: slope {slope}");
        }
    }
}

#[test]
fn er_point_interpolation_order_example() {
    let mut c = StudyConfig::new(Family::ER, 3, 5);
    c.first_level = 2;
    c.solution = ExactSolution::SinSin;
    let rows = run_interpolation_study(&c).unwrap();
    assert!(fitted_order(&rows.iter().map(|r| r.h1_err).collect::<Vec<_>>()) >= 2.9);
}

#[test]
fn global_polynomials_are_reproduced() {
    // x y (1 - x)(1 - y) has degree 4; zero on the boundary
    let u = |x: f64, y: f64| x * y * (1.0 - x) * (1.0 - y);
    let grad = |x: f64, y: f64| ((1.0 - 2.0 * x) * y * (1.0 - y), (1.0 - 2.0 * y) * x * (1.0 - x));
    for (family, m) in [(Family::R, 5), (Family::ER, 5), (Family::RPLUS, 4)] {
        let space = GlobalSpace::new(
            Arc::new(uniform_rect_mesh(3, Rect::UNIT).unwrap()),
            ElementKind::new(family, m, DofMode::Point).unwrap(),
            true,
        )
        .unwrap();
        let fe = interpolate(&space, u).unwrap();
        let (l2, h1) = ncquad::error_norms(&space, &fe.coeffs, u, grad, m + 4).unwrap();
        assert!(l2 <= 1e-10 && h1 <= 1e-10, "{family}_{m}: {l2:e} {h1:e}");
    }
}

/// Continuous piecewise Lagrange basis on `n` uniform cells with Lobatto nodes.
fn piecewise_lobatto(n: usize, m: usize, node: usize, t: f64) -> f64 {
    let lob = gauss_lobatto_nodes(m + 1).unwrap();
    let cell_of_node = |k: usize| (k / m, k % m);
    let (cell, local) = cell_of_node(node);
    let h = 1.0 / n as f64;
    let eval_in = |c: usize, i: usize| {
        let x0 = c as f64 * h;
        if t < x0 - 1e-14 || t > x0 + h + 1e-14 {
            return 0.0;
        }
        lagrange_basis(&lob, i, 2.0 * (t - x0) / h - 1.0)
    };
    if local == 0 {
        // a cell boundary node belongs to both neighbors
        let left = if cell > 0 { eval_in(cell - 1, m) } else { 0.0 };
        let right = if cell < n { eval_in(cell, 0) } else { 0.0 };
        let on_edge = (t - cell as f64 * h).abs() < 1e-14;
        if on_edge {
            1.0
        } else {
            left + right
        }
    } else {
        eval_in(cell, local)
    }
}

#[test]
fn r_interpolation_is_onto() {
    let (n, m) = (2, 3);
    let space = GlobalSpace::new(
        Arc::new(uniform_rect_mesh(n, Rect::UNIT).unwrap()),
        ElementKind::new(Family::R, m, DofMode::Point).unwrap(),
        true,
    )
    .unwrap();
    // interior nodes of the conforming Q_m space with zero boundary values
    let interior: Vec<usize> = (1..n * m).collect();
    let mut images = Vec::new();
    for &i in &interior {
        for &j in &interior {
            let u = |x: f64, y: f64| piecewise_lobatto(n, m, i, x) * piecewise_lobatto(n, m, j, y);
            images.push(interpolate(&space, u).unwrap().coeffs);
        }
    }
    assert_eq!(images.len(), 25);
    let mat = DMatrix::from_fn(images.len(), space.n_free(), |r, c| images[r][c]);
    let sv = mat.singular_values();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
    assert_eq!(rank, space.kernel_dimension());
}

#[test]
fn r_interpolants_satisfy_the_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (family, m) in [(Family::R, 3), (Family::R, 5), (Family::RPLUS, 2), (Family::RPLUS, 4)] {
        let space = GlobalSpace::new(
            Arc::new(perturbed_mesh(4, 2, 0.2).unwrap()),
            ElementKind::new(family, m, DofMode::Point).unwrap(),
            true,
        )
        .unwrap();
        let (a, b) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
        let fe = interpolate(&space, |x, y| (a * x).sin() * (b * y).cos() * x * y * (1.0 - x) * (1.0 - y)).unwrap();
        let scale = fe.coeffs.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        assert!(fe.constraint_residual() <= 1e-11 * scale.max(1.0), "{family}_{m}");
    }
}

#[test]
fn moment_er_jumps_are_orthogonal_to_low_degrees() {
    for mesh in [uniform_rect_mesh(3, Rect::UNIT).unwrap(), perturbed_mesh(4, 8, 0.2).unwrap()] {
        for m in [3, 5] {
            let mesh = Arc::new(mesh.clone());
            let space =
                GlobalSpace::new(mesh.clone(), ElementKind::new(Family::ER, m, DofMode::Moment).unwrap(), true).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let coeffs: Vec<f64> = (0..space.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fe = space.function(coeffs).unwrap();
            let rule = gauss_rule(m + 3).unwrap();
            for edge in mesh.edges().iter().filter(|e| !e.is_boundary()) {
                let (pa, pb) = (mesh.vertices()[edge.vertices.0], mesh.vertices()[edge.vertices.1]);
                let sides = [edge.left.0, edge.right.unwrap().0];
                for q in 0..m {
                    let moment: f64 = rule
                        .iter()
                        .map(|(t, w)| {
                            let s = 0.5 * (t + 1.0);
                            let (x, y) = (pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1]));
                            let val = |e: usize| {
                                let (xh, yh) = mesh.geom_map(e).inverse(x, y).unwrap();
                                fe.evaluate(e, xh.clamp(-1.0, 1.0), yh.clamp(-1.0, 1.0)).unwrap().0
                            };
                            w * (val(sides[0]) - val(sides[1])) * legendre_eval(q, t)
                        })
                        .sum();
                    assert!(moment.abs() <= 1e-10, "m={m} q={q}: {moment:e}");
                }
            }
        }
    }
}
