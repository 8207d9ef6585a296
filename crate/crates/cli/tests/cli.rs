use std::path::Path;
use std::process::Command;

fn snl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_snl"))
        .args(args)
        .env_remove("SNL_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_design_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let params = dir.path().join("params.json");
    let trace = dir.path().join("trace.csv");
    let out = snl(&["generate", "--n", "6", "--m", "3", "--radius", "1.0", "--seed", "3", "--out", p(&inst)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = snl(&["design", "--instance", p(&inst), "--out", p(&params)]);
    assert!(out.status.success());
    let file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    assert_eq!(file["n"], 6);
    assert_eq!(file["checks"]["passed"], true);

    let out = snl(&[
        "solve", "--instance", p(&inst), "--params", p(&params), "--mode", "decentralized",
        "--max-iter", "20", "--trace", p(&trace),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["iterations"], 20);
    assert_eq!(report["network"]["non_edge_messages"], 0);
    assert_eq!(report["network"]["rounds"], 40);
    let rows = snl_cli::output::load_trace(&trace).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0].iteration, 1);

    let out = snl(&["validate", "--instance", p(&inst), "--params", p(&params)]);
    assert!(out.status.success());
}

#[test]
fn design_from_edge_list_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.txt");
    std::fs::write(&edges, "0 1\n1 2\n2 3\n").unwrap();
    let a = snl(&["design", "--edges", p(&edges)]);
    let b = snl(&["design", "--edges", p(&edges), "--decentralized"]);
    assert!(a.status.success() && b.status.success());
    let a: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let x = a["S_dense"][i][j].as_f64().unwrap();
            let y = b["S_dense"][i][j].as_f64().unwrap();
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let out = snl(&["solve", "--instance", "/does/not/exist.json"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    let out = snl(&["solve", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"trials": 0}"#).unwrap();
    let out = snl(&["experiment", "comparison", "--config", p(&cfg)]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn output_dir_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"trials": 1, "instance": {"n": 2, "m": 2, "radius": 1.5}, "iterations": 5, "output_dir": "/nonexistent/ignored"}"#,
    )
    .unwrap();
    let target = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_snl"))
        .args(["experiment", "centrality", "--config", p(&cfg)])
        .env("SNL_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("centrality.csv").exists());
    assert!(target.join("centrality.svg").exists());
}
