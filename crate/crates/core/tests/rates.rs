use ncquad::study::{MeshKind, StudyConfig};
use ncquad::{run_study, DofMode, Family};

fn check(family: Family, m: usize, mode: DofMode, levels: usize, mesh: MeshKind) {
    let mut c = StudyConfig::new(family, m, levels);
    c.first_level = levels - 2;
    c.dof_mode = mode;
    c.mesh = mesh;
    c.record_timing = false;
    let rows = run_study(&c).unwrap();
    let last = rows.last().unwrap();
    let mf = m as f64;
    assert!(last.h1_order >= mf - 0.1, "{family}_{m} {mode:?} {mesh:?}: H1 order {}", last.h1_order);
    assert!(last.l2_order >= mf + 0.9, "{family}_{m} {mode:?} {mesh:?}: L2 order {}", last.l2_order);
}

#[test]
fn odd_families_reach_optimal_orders() {
    for (family, m, levels) in [(Family::R, 1, 7), (Family::R, 3, 6), (Family::R, 5, 5), (Family::R_TILDE, 5, 5)] {
        check(family, m, DofMode::Point, levels, MeshKind::Uniform);
    }
    for (m, levels) in [(1, 7), (3, 6), (5, 5)] {
        check(Family::ER, m, DofMode::Point, levels, MeshKind::Uniform);
        check(Family::ER, m, DofMode::Moment, levels, MeshKind::Uniform);
    }
}

#[test]
fn even_family_reaches_optimal_orders() {
    for (m, levels) in [(2, 6), (4, 5), (6, 4)] {
        check(Family::RPLUS, m, DofMode::Point, levels, MeshKind::Uniform);
    }
}

#[test]
fn perturbed_meshes_keep_the_h1_order() {
    for (family, m) in [(Family::R, 3), (Family::ER, 3), (Family::RPLUS, 2), (Family::RPLUS, 4)] {
        let mut c = StudyConfig::new(family, m, 6);
        c.first_level = 4;
        c.mesh = MeshKind::Perturbed;
        c.seed = 4;
        let rows = run_study(&c).unwrap();
        let last = rows.last().unwrap();
        assert!(last.h1_order >= m as f64 - 0.15, "{family}_{m}: {}", last.h1_order);
    }
}
