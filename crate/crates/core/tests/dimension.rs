use std::sync::Arc;

use ncquad::{expected_dimension, perturbed_mesh, uniform_rect_mesh, DofMode, ElementKind, Family, GlobalSpace, QuadMesh, Rect};

fn meshes() -> Vec<(String, QuadMesh)> {
    let mut out: Vec<(String, QuadMesh)> = [2, 3, 4]
        .into_iter()
        .map(|n| (format!("uniform {n}x{n}"), uniform_rect_mesh(n, Rect::UNIT).unwrap()))
        .collect();
    out.push(("perturbed 4x4".into(), perturbed_mesh(4, 7, 0.2).unwrap()));
    out
}

const KINDS: [(Family, usize); 6] = [
    (Family::R, 3),
    (Family::R, 5),
    (Family::ER, 3),
    (Family::ER, 5),
    (Family::RPLUS, 2),
    (Family::RPLUS, 4),
];

#[test]
fn kernel_dimension_matches_closed_form() {
    let mut checked = 0;
    for (name, mesh) in meshes() {
        let mesh = Arc::new(mesh);
        for (family, m) in KINDS {
            let kind = ElementKind::new(family, m, DofMode::Point).unwrap();
            let space = GlobalSpace::new(mesh.clone(), kind, true).unwrap();
            assert_eq!(space.kernel_dimension(), expected_dimension(&space), "{kind} on {name}");
            checked += 1;
        }
    }
    assert_eq!(checked, 24);
}

#[test]
fn constraint_rank_is_one_short() {
    for (name, mesh) in meshes() {
        let n_e = mesh.n_elements();
        let mesh = Arc::new(mesh);
        for (family, m) in [(Family::R, 3), (Family::RPLUS, 2), (Family::RPLUS, 4)] {
            let kind = ElementKind::new(family, m, DofMode::Point).unwrap();
            let space = GlobalSpace::new(mesh.clone(), kind, true).unwrap();
            assert_eq!(space.constraint_rank(), n_e - 1, "{kind} on {name}");
        }
    }
}

#[test]
fn moment_and_point_er_have_equal_dimension() {
    let mesh = Arc::new(uniform_rect_mesh(3, Rect::UNIT).unwrap());
    for m in [3, 5] {
        let dims: Vec<usize> = [DofMode::Point, DofMode::Moment]
            .into_iter()
            .map(|mode| {
                let space = GlobalSpace::new(mesh.clone(), ElementKind::new(Family::ER, m, mode).unwrap(), true).unwrap();
                space.kernel_dimension()
            })
            .collect();
        assert_eq!(dims[0], dims[1]);
    }
}
