use serde_json::Value;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cartan-heis")).args(args).output().unwrap()
}

fn structured(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--format", "structured"]);
    let out = run(&all);
    (out.status.code().unwrap(), serde_json::from_slice(&out.stdout).unwrap())
}

#[test]
fn sphere_invariants_have_unit_nu() {
    let (code, r) = structured(&["invariants", "--surface", "builtin:sphere(2,1)", "--grid", "17,17,17", "--summary-only"]);
    assert_eq!(code, 0);
    assert!((r["nu"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn flat_subgroup_is_vertical() {
    let (code, r) = structured(&["classify", "--surface", "builtin:heis_sub(1,2)", "--grid", "5"]);
    assert_eq!(code, 0);
    assert_eq!(r["class"], "Vertical");
}

#[test]
fn sphere_fit_reports_radius() {
    let (code, r) = structured(&["classify", "--surface", "builtin:sphere(2,2)", "--grid", "5", "--require", "sphere"]);
    assert_eq!(code, 0);
    assert!((r["fits"]["sphere"]["radius"].as_f64().unwrap() - 2.0).abs() < 1e-6, "{}", r["fits"]);
}

#[test]
fn failed_requirement_exits_one() {
    let out = run(&["classify", "--surface", "builtin:sphere(2,1)", "--grid", "3", "--require", "flat"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn typo_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.srf");
    std::fs::write(&path, "surface s { n = 1; m = 1; params = [u, v, w]; chart = [[0, 1], [0, 1], [0, 1]]; }\nx[1] = u;\ny[1] = v +* 2;\nt = w;\n").unwrap();
    let p = path.to_str().unwrap();
    let out = run(&["invariants", "--surface", p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(&format!("{p}:3:")), "{err}");
}

#[test]
fn bad_arguments_exit_two() {
    for args in [
        &["invariants", "--surface", "builtin:sphere(2,1)", "--grid", "2"][..],
        &["invariants", "--surface", "builtin:sphere(2,1)", "--tol", "nonsense=1"],
        &["invariants", "--surface", "builtin:nosuch"],
        &["invariants", "--surface", "/nonexistent.srf"],
    ] {
        assert_eq!(run(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn structured_output_is_deterministic() {
    let args = ["roundtrip", "--surface", "builtin:holograph", "--grid", "5", "--format", "structured"];
    let a = run(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_cartan-heis")).args(args).env("CARTAN_HEIS_THREADS", "1").output().unwrap();
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn report_goes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = run(&["check", "--surface", "builtin:siegel_quadric", "--grid", "3", "--format", "structured", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["metadata"]["command"], "check");
}

#[test]
fn decompose_splits_a_translation() {
    let m = "1,0,0,0,0,0, 0,1,0,0,0,0, 0,0,1,0,0,0, 0,0,0,1,0,0, 0,0,0,0,1,0, 0.5,0,0,0,0,1";
    let (code, r) = structured(&["decompose", "--matrix", m]);
    assert_eq!(code, 0, "{r}");
    let p = r["translation"].as_array().unwrap();
    assert!((p.last().unwrap().as_f64().unwrap() - 0.5).abs() < 1e-12, "{r}");
}
