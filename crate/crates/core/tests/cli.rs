use std::fs;
use std::process::Command;

use ncquad::study::read_csv;

fn ncquad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ncquad"))
}

#[test]
fn repeated_runs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let status = ncquad()
            .args(["run", "--family", "r", "--order", "3", "--levels", "4", "--mesh", "perturbed", "--seed", "3"])
            .args(["--no-timing", "--csv"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = read_csv(outputs[0].as_slice()).unwrap();
    assert_eq!(rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert!(rows.iter().all(|r| r.seconds == 0.0));
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().next(), Some("level,l2_err,l2_order,h1_err,h1_order,ndof,iters,seconds"));
}

#[test]
fn text_table_has_one_line_per_level() {
    let out = ncquad()
        .args(["run", "--family", "er", "--order", "3", "--levels", "3", "--no-timing"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
}

#[test]
fn invalid_arguments_fail() {
    for args in [
        vec!["run", "--family", "r", "--order", "4"],
        vec!["run", "--family", "rplus", "--order", "3"],
        vec!["run", "--family", "er", "--variant", "tilde", "--order", "3"],
        vec!["run", "--family", "q", "--order", "3"],
        vec!["run", "--family", "r", "--order", "3", "--mesh", "perturbed", "--amplitude", "0.9"],
    ] {
        let status = ncquad().args(&args).output().unwrap().status;
        assert!(!status.success(), "{args:?}");
    }
}

#[test]
fn solver_failure_keeps_the_partial_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = ncquad()
        .args(["run", "--family", "er", "--order", "3", "--levels", "3", "--max-iter", "1", "--no-timing", "--csv"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("level 2"));
    assert_eq!(read_csv(fs::File::open(&path).unwrap()).unwrap().len(), 1);
}

#[test]
fn verify_passes() {
    let out = ncquad().arg("verify").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn mesh_subcommand_writes_a_loadable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let status = ncquad()
        .args(["mesh", "--level", "3", "--mesh", "perturbed", "--seed", "2", "--output"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let mesh = ncquad::mesh::io::load(&path).unwrap();
    assert_eq!(mesh, ncquad::perturbed_mesh(4, 2, 0.2).unwrap());
}
