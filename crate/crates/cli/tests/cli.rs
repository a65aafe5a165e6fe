use std::path::{Path, PathBuf};
use std::process::Command;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sepccm")).args(args).output().expect("binary runs");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap_or(-1), text)
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written");
    serde_json::from_str(&text).unwrap()
}

fn out(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

#[test]
fn unknown_flags_are_rejected() {
    let (code, text) = run(&["verify", "--metric", "published", "--bogus", "1"]);
    assert_eq!(code, 2, "{text}");
    let (code, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn zero_horizon_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "demo");
    let (code, text) = run(&["demo", "--horizon", "0.0", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("horizon"));
    let (code, _) = run(&["simulate", "--metric", "published", "--horizon", "0.0", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn negative_degree_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "synth");
    let (code, _) = run(&["synth", "--deg-w", "-1", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn geodesic_under_the_identity_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "geo");
    let (code, text) = run(&[
        "geodesic", "--metric", "identity", "--node", "0", "--to", "1,0,0", "--out-dir", dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    let summary = std::fs::read_to_string(dir.join("geodesic.txt")).unwrap();
    let energy: f64 = summary.lines().next().unwrap().strip_prefix("energy = ").unwrap().parse().unwrap();
    assert!((energy - 1.0).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.join("geodesic.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,x_0,x_1,x_2"));
    assert_eq!(csv.lines().count(), 18);
    assert_eq!(manifest(&dir)["command"], "geodesic");
}

#[test]
fn verify_reports_the_worst_point_of_a_failing_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "verify");
    let (code, text) = run(&["verify", "--metric", "published", "--box", "-0.5 0.5", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("worst_point = ["));
    let cert = std::fs::read_to_string(dir.join("certificate.txt")).unwrap();
    assert!(cert.contains("verified = false"));
    assert!(cert.contains("worst_point = "));
    let m = manifest(&dir);
    assert_eq!(m["outcome"], "not verified");
    assert_eq!(m["config"]["metric"], "published");
}

#[test]
fn verify_accepts_a_contracting_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "verify");
    let (code, text) = run(&[
        "verify",
        "--network",
        &data("chain_network.txt"),
        "--metric",
        &data("chain_metric.txt"),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(manifest(&dir)["outcome"], "verified");
    let (code, report) = run(&["report", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(report.contains("verified = true"));
}

#[test]
fn synthesis_on_an_expanding_scalar_system_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("expanding.txt");
    std::fs::write(&net, "nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = v0\n").unwrap();
    let dir = out(&tmp, "synth");
    let (code, text) = run(&[
        "synth", "--network", net.to_str().unwrap(), "--samples", "64", "--rounds", "1", "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{text}");
    let report = std::fs::read_to_string(dir.join("synthesis.txt")).unwrap();
    assert!(report.contains("feasible = false"));
    assert!(report.contains("lower lambda"));
    assert!(!dir.join("metric.txt").exists());
    assert_eq!(manifest(&dir)["outcome"], "infeasible");
}

#[test]
fn simulate_writes_trajectories_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = out(&tmp, "sim");
    let (code, text) = run(&[
        "simulate",
        "--network",
        &data("chain_network.txt"),
        "--metric",
        &data("chain_metric.txt"),
        "--x0",
        "0.2,-0.1,0.1,0,0,0.1",
        "--horizon",
        "5",
        "--k-segments",
        "8",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    let closed = std::fs::read_to_string(dir.join("closed_loop.csv")).unwrap();
    assert_eq!(closed.lines().count(), 5002);
    let inputs = std::fs::read_to_string(dir.join("inputs.csv")).unwrap();
    assert_eq!(inputs.lines().count(), 501);
    let m = manifest(&dir);
    assert_eq!(m["outcome"], "converged");
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in ["reference.csv", "closed_loop.csv", "inputs.csv", "convergence.csv"] {
        assert!(files.contains(&f), "{files:?}");
    }
    assert!(m.get("out_dir").is_none());
}

#[test]
fn report_without_a_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = run(&["report", "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(text.contains("error in report"));
}
