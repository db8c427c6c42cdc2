//! The `qcdlab` binary: output formats, exit codes and reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn qcdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcdlab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn coeff_examples() {
    let out = qcdlab(&["coeff", "--kind", "sigma", "--K", "0", "--N", "3", "--t", "0.5", "--theta", "1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.5\n");
    let out = qcdlab(&["coeff", "--kind", "dmax", "--K", "-1", "--N", "3"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "inf\n");
    let out = qcdlab(&["coeff", "--kind", "dmax", "--K", "2", "--N", "3"]);
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((d - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn envelope_of_one_plus_abs() {
    let v = json(&qcdlab(&["envelope", "--density", &data("one_plus_abs.json"), "--K", "0", "--N", "2"]));
    let q = v["result"]["q_order"].as_f64().unwrap();
    assert!((q - 2.0).abs() <= 0.02, "{q}");
    assert_eq!(v["meta"]["settings"]["grid_points"], 5);
    assert!(v["result"]["envelope"]["values"].is_array());
}

#[test]
fn lambda_of_the_unit_interval() {
    let v = json(&qcdlab(&["lambda", "--density", &data("uniform01.json"), "--p", "2"]));
    let l = v["result"]["lambda"].as_f64().unwrap();
    assert!((l - 9.8696).abs() <= 0.005 * 9.8696, "{l}");
    let v = json(&qcdlab(&["lambda", "--density", &data("uniform01.json"), "--p", "2", "--omega", "0,0.2", "--omega", "0.8,1"]));
    assert!(v["result"]["lambda"].as_f64().unwrap() >= l);
}

#[test]
fn classify_reports_verdicts_with_exit_zero() {
    let f = data("one_plus_abs.json");
    let v = json(&qcdlab(&["classify", "--density", &f, "--kind", "cd", "--K", "0", "--N", "2"]));
    assert_eq!(v["result"]["passed"], false);
    let v = json(&qcdlab(&["classify", "--density", &f, "--kind", "qcd", "--Q", "2", "--K", "0", "--N", "2"]));
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["meta"]["seed"], 0x5eed);
    let out = qcdlab(&["classify", "--density", &f, "--kind", "cgtd", "--K", "0", "--N", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_density_names_the_field() {
    let out = qcdlab(&["classify", "--density", &data("bad_model.json"), "--kind", "cd", "--K", "0", "--N", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.slope0"), "{err}");
    let out = qcdlab(&["lambda", "--density", &data("missing.json"), "--p", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qcdlab(&["coeff", "--kind", "sigma"]).status.code(), Some(2));
    assert_eq!(qcdlab(&["h1", "dist", "--target", "1,2"]).status.code(), Some(2));
    assert_eq!(qcdlab(&["localize", "--grid", "7"]).status.code(), Some(2));
    assert_eq!(qcdlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn interp_with_check() {
    let v = json(&qcdlab(&[
        "interp",
        "--reference",
        &data("uniform01.json"),
        "--mu0",
        &data("mu0.json"),
        "--mu1",
        &data("mu1.json"),
        "--t",
        "0.5",
        "--check",
        "cd",
        "--N",
        "2",
    ]));
    assert!((v["result"]["mass_t"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["result"]["check"]["passed"], true);
}

#[test]
fn h1_dist_matches_closed_form() {
    let v = json(&qcdlab(&["h1", "dist", "--target", "0,0,1"]));
    let d = v["result"]["distance"].as_f64().unwrap();
    assert!((d - 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-3);
    assert_eq!(v["result"]["geodesic"]["non_unique"], true);
}

#[test]
fn stochastic_output_is_reproducible() {
    let args = [
        "h1", "bm", "--centerA", "0,0,0", "--radiusA", "0.2", "--centerB", "0,0,0.5", "--radiusB", "0.2", "--t", "0.5",
        "--samples", "20000", "--seed", "11",
    ];
    let a = qcdlab(&args);
    let b = qcdlab(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["meta"]["seed"], 11);
    assert_eq!(v["result"]["seed"], 11);
    let one = Command::new(env!("CARGO_BIN_EXE_qcdlab")).args(args).env("QCDLAB_THREADS", "1").output().unwrap();
    assert_eq!(one.stdout, a.stdout);
}

#[test]
fn threads_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_qcdlab")).args(["constants"]).env("QCDLAB_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_match_the_golden_file() {
    let out = qcdlab(&["constants"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), include_str!("golden/constants.json"));
    let v = json(&qcdlab(&["constants", "--space", "3sasakian", "--D", "2"]));
    assert_eq!(v["result"]["Q"], 64.0);
    assert_eq!(v["result"]["geodesic_dimension"], "4d+9");
}

#[test]
fn localize_from_csv() {
    let dir = std::env::temp_dir().join(format!("qcdlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("needles.csv");
    let v = json(&qcdlab(&[
        "localize",
        "--grid",
        "16x16",
        "--g",
        &data("half_square16.csv"),
        "--csv",
        csv.to_str().unwrap(),
    ]));
    assert!(v["result"]["duality_gap"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["result"]["report"]["passed"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("needle,s,h,g_mass\n"));
    let bad = qcdlab(&["localize", "--grid", "8x8", "--g", &data("half_square16.csv")]);
    assert_eq!(bad.status.code(), Some(2));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn output_flag_writes_a_file() {
    let path = std::env::temp_dir().join(format!("qcdlab-out-{}.json", std::process::id()));
    let out = qcdlab(&["constants", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, include_str!("golden/constants.json"));
    std::fs::remove_file(path).ok();
}
