use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wbundle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbundle")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn random_cochain(path: &Path, degree: i64, seed: u64) {
    let out = wbundle(&[
        "mesh", "--level", "2", "--random", path.to_str().unwrap(),
        "--degree", &degree.to_string(), "--seed", &seed.to_string(),
    ]);
    assert!(out.status.success());
}

#[test]
fn mesh_reports_topology() {
    let out = wbundle(&["mesh", "--level", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["result"]["faces"], 320);
    assert_eq!(r["result"]["euler_characteristic"], 2);
    assert_eq!(r["config"]["command"]["subcommand"], "mesh");
    assert_eq!(r["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn dist_reports_value_gap_and_charges() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    random_cochain(&a, 1, 1);
    random_cochain(&b, 1, 2);
    let out = wbundle(&[
        "dist", "--p", "1.25", "--h1", a.to_str().unwrap(), "--h2", b.to_str().unwrap(), "--level", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out)["result"].clone();
    assert!(r["value"].as_f64().unwrap() > 0.0);
    assert!(r["gap"].as_f64().unwrap() <= 1e-6);
    assert!(r["charges"].is_array());
}

#[test]
fn input_hash_tracks_file_contents() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    random_cochain(&a, 0, 3);
    random_cochain(&b, 0, 4);
    let args = ["dist", "--p", "1.5", "--h1", a.to_str().unwrap(), "--h2", b.to_str().unwrap(), "--level", "2"];
    let first = json(&wbundle(&args))["input_hash"].clone();
    random_cochain(&b, 0, 5);
    let second = json(&wbundle(&args))["input_hash"].clone();
    assert_ne!(first, second);
}

#[test]
fn holder_reports_are_byte_identical() {
    let args = ["holder", "--p", "1.25", "--pairs", "4", "--seed", "7", "--level", "2", "--no-segments"];
    let (a, b) = (wbundle(&args), wbundle(&args));
    assert_eq!(a.status.code(), b.status.code());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn invalid_configuration_exits_with_two() {
    assert_eq!(wbundle(&["dist", "--p", "2.5", "--h1", "a", "--h2", "b"]).status.code(), Some(2));
    assert_eq!(wbundle(&["nonsense"]).status.code(), Some(2));
    assert_eq!(wbundle(&["energy", "--p", "1.7"]).status.code(), Some(2));
    let missing = wbundle(&["dist", "--p", "1.25", "--h1", "/nonexistent.csv", "--h2", "/nonexistent.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn flux_counts_the_enclosed_charge() {
    let out = wbundle(&["flux", "--center", "0.1,-0.2,0", "--r", "0.5", "--level", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out)["result"].clone();
    assert!((r["flux"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn slice_then_trace_with_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = wbundle(&["slice", "--r", "0.9", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let plot = dir.path().join("trace.dat");
    let out = wbundle(&["trace", "--phi", "constant:1", "--plot", plot.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["member"], true);
    let text = std::fs::read_to_string(&plot).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|l| l.split_whitespace().count() == 2));
    // a slice of the centered monopole is the constant datum
    let out = wbundle(&["trace", "--phi", csv.to_str().unwrap()]);
    assert_eq!(json(&out)["result"]["member"], true);
}

#[test]
fn monotonicity_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("prof.dat");
    let out = wbundle(&["monotonicity", "--plot", plot.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(plot.exists());
}

#[test]
fn audit_subset_passes() {
    let out = wbundle(&["audit-all", "--level", "3", "--p", "1.25", "--only", "1,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["passed"], 2);
}
