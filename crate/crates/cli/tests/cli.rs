//! End-to-end invocations of the rq8 binary: exit-code contract and
//! JSON schema self-consistency.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rq8(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rq8"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

const X: &str = "0,0,0,0,0,0,0,0";
const Y: &str = "-9/8,0,0,0,3/8,3/8,3/8,-6/8";

fn build_fig1_witness(dir: &Path) -> std::path::PathBuf {
    let out = rq8(&["build", "--coords", X, Y]);
    let path = dir.join("w.json");
    assert!(out.status.success());
    fs::write(&path, &out.stdout).unwrap();
    path
}

#[test]
fn decompose_seven() {
    let v = stdout_json(&rq8(&["decompose", "7"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["squares"], serde_json::json!(["2", "1", "1", "1"]));
}

#[test]
fn decompose_rejects_garbage_and_negatives() {
    assert_eq!(exit_code(&rq8(&["decompose", "seven"])), 2);
    assert_eq!(exit_code(&rq8(&["decompose", "-3"])), 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(exit_code(&rq8(&["frobnicate"])), 2);
}

#[test]
fn version_and_help() {
    assert!(rq8(&["--version"]).status.success());
    assert!(rq8(&["--help"]).status.success());
    assert!(rq8(&["build", "--help"]).status.success());
}

#[test]
fn config_fig2_has_ten_points_and_45_claims() {
    let v = stdout_json(&rq8(&["config", "fig2"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["points"].as_object().unwrap().len(), 10);
    assert_eq!(v["claims"].as_array().unwrap().len(), 45);
}

#[test]
fn config_fig1_scaled() {
    let v = stdout_json(&rq8(&["config", "fig1", "--scale", "3/2"]));
    assert_eq!(v["points"].as_object().unwrap().len(), 19);
    // Apex claim at (3/2)^2 * 9/4 = 81/16.
    let claims = v["claims"].as_array().unwrap();
    assert!(claims
        .iter()
        .any(|c| c[0] == "x" && c[1] == "y" && c[2] == "81/16"));
    assert_eq!(exit_code(&rq8(&["config", "fig1", "--scale", "0"])), 2);
    assert_eq!(exit_code(&rq8(&["config", "fig9"])), 2);
}

#[test]
fn build_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = build_fig1_witness(dir.path());
    let w: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(w["schema"], 1);
    assert_eq!(w["points"].as_array().unwrap().len(), 19);

    let verify = rq8(&["verify", path.to_str().unwrap()]);
    let v = stdout_json(&verify);
    assert_eq!(v["pass"], true);
    assert_eq!(v["edges"], 89);
}

#[test]
fn build_from_point_files() {
    let dir = tempfile::tempdir().unwrap();
    let xp = dir.path().join("x.json");
    let yp = dir.path().join("y.json");
    fs::write(&xp, r#"["0","0","0","0","0","0","0","0"]"#).unwrap();
    fs::write(&yp, r#"["-9/8","0","0","0","3/8","3/8","3/8","-6/8"]"#).unwrap();
    let out = rq8(&["build", "--pair", xp.to_str().unwrap(), yp.to_str().unwrap()]);
    let v = stdout_json(&out);
    assert_eq!(v["points"].as_array().unwrap().len(), 19);
}

#[test]
fn tampered_witness_fails_verification_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = build_fig1_witness(dir.path());
    let mut w: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    w["points"][0][0] = serde_json::json!("1/7");
    fs::write(&path, w.to_string()).unwrap();
    let out = rq8(&["verify", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
    assert!(!v["failures"].as_array().unwrap().is_empty());
}

#[test]
fn exhausted_budget_is_exit_three() {
    let out = rq8(&["build", "--coords", X, Y, "--budget", "5"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn bound_set_requires_the_bound_distance() {
    let out = rq8(&["build", "--bound", "--coords", X, Y]);
    assert_eq!(exit_code(&out), 2);
    let out = rq8(&[
        "build",
        "--bound",
        "--coords",
        "0,0,0,0,0,0,0,0",
        "1/4,0,0,0,0,0,0,0",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["target"]["bound_only"], true);
}

#[test]
fn estimate_matches_the_materialized_figure() {
    let v = stdout_json(&rq8(&["estimate", "--sqdist", "9/4"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["points"], 19);
    assert_eq!(v["unit_edges"], 89);
    assert_eq!(exit_code(&rq8(&["estimate", "--sqdist", "nine"])), 2);
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let path = build_fig1_witness(dir.path());
    let p = path.to_str().unwrap();

    let gml = rq8(&["export", p, "--format", "graphml"]);
    assert!(String::from_utf8_lossy(&gml.stdout).starts_with("<?xml"));

    let dimacs = rq8(&["export", p, "--format", "dimacs"]);
    let text = String::from_utf8_lossy(&dimacs.stdout).to_string();
    assert!(text.contains("p edge 19 89"));

    // JSON export round-trips through the builder's own parser.
    let json_out = rq8(&["export", p, "--format", "json"]);
    let reexported = stdout_json(&json_out);
    let original: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(reexported, original);

    assert_eq!(exit_code(&rq8(&["export", p, "--format", "gexf"])), 2);
}

#[test]
fn derive_text_and_json() {
    let out = rq8(&["derive", "--n", "8", "sqrt(3)"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(out.status.success());
    assert!(text.contains("R_PYTH_MINUS"));
    assert!(text.contains("size account"));

    let v = stdout_json(&rq8(&["derive", "--n", "8", "--json", "sqrt(3)"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["tree"]["rule"], "R_PYTH_MINUS");
    assert_eq!(v["tree"]["children"][0]["value"], "2");
    assert_eq!(v["tree"]["children"][1]["value"], "1");
    assert!(v["size_account"]["points"].as_u64().unwrap() > 0);
}

#[test]
fn derive_failures_split_usage_from_math() {
    // Unparsable expression: usage error.
    assert_eq!(exit_code(&rq8(&["derive", "--n", "8", "sqrt(3"])), 2);
    // Well-formed but negative: derivation failure.
    assert_eq!(exit_code(&rq8(&["derive", "--n", "8", "1-2"])), 1);
}

#[test]
fn falsify_reports_no_counterexample_on_base_edge() {
    let dir = tempfile::tempdir().unwrap();
    let out = rq8(&[
        "build",
        "--coords",
        "0,0,0,0,0,0,0,0",
        "1,0,0,0,0,0,0,0",
    ]);
    let path = dir.path().join("edge.json");
    fs::write(&path, &out.stdout).unwrap();
    let v = stdout_json(&rq8(&[
        "falsify",
        path.to_str().unwrap(),
        "--restarts",
        "2",
        "--max-iters",
        "500",
    ]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["verdict"], "NoCounterexample");
    assert_eq!(v["records"].as_array().unwrap().len(), 2);
}
