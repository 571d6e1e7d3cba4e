//! End-to-end runs of the CLI verbs against small configs, checking exit
//! codes and output files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lsdr"))
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn quadrature_verb_writes_rule_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rule.json");
    let config = write_config(
        dir.path(),
        "quad.json",
        serde_json::json!({
            "measure": {"kind": "uniform_box", "bounds": [[-1.0, 1.0], [-1.0, 1.0]]},
            "rule": {"type": "gauss", "points_per_dim": 3},
            "output": {"json": out.to_str().unwrap()}
        }),
    );
    let status = bin().arg("quadrature").arg(&config).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rule: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(rule["dim"], 2);
    assert_eq!(rule["kind"], "tensor");
    assert_eq!(rule["nodes"].as_array().unwrap().len(), 9);
}

#[test]
fn estimate_verb_writes_matrix_and_eigs() {
    let dir = tempfile::tempdir().unwrap();
    let json_out = dir.path().join("matrix.json");
    let csv_out = dir.path().join("eigs.csv");
    let config = write_config(
        dir.path(),
        "est.json",
        serde_json::json!({
            "model": {"name": "ex2", "seed": 17},
            "rule": {"type": "gauss", "points_per_dim": 5},
            "estimator": "lsir",
            "k": 6,
            "output": {"json": json_out.to_str().unwrap(), "csv": csv_out.to_str().unwrap()}
        }),
    );
    let status = bin().arg("estimate").arg(&config).status().unwrap();
    assert!(status.success());
    let matrix: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(matrix["estimator"], "LSIR");
    assert_eq!(matrix["m"], 5);
    assert_eq!(matrix["matrix"].as_array().unwrap().len(), 25);
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("index,value\n"));
    assert_eq!(csv.lines().count(), 6); // header + 5 eigenvalues
}

#[test]
fn converge_quad_verb_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv_out = dir.path().join("report.csv");
    let json_out = dir.path().join("report.json");
    let config = write_config(
        dir.path(),
        "cq.json",
        serde_json::json!({
            "model": {"name": "ex1", "seed": 17},
            "level_grid": [2, 3, 4],
            "k": 4,
            "output": {"csv": csv_out.to_str().unwrap(), "json": json_out.to_str().unwrap()}
        }),
    );
    let status = bin().arg("converge-quad").arg(&config).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("study,param_name,param_value,metric,value,wall_ms\n"));
    assert!(csv.contains("node_diff_max"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(report["study"], "quadrature_convergence");
    // The resolved model constants are recorded for reproducibility.
    assert!(report["resolved_model"]["g"].is_array());
}

#[test]
fn missing_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        serde_json::json!({
            "model": {"name": "ex2"}
        }),
    );
    let status = bin().arg("converge-matrix").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unparseable_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{not json").unwrap();
    let status = bin().arg("compare-mc").arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    // A tensor rule larger than the node budget is a numerical failure, not
    // a config parse error.
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "big.json",
        serde_json::json!({
            "measure": {"kind": "gaussian_standard", "dim": 6},
            "rule": {"type": "gauss", "points_per_dim": 17},
            "output": {}
        }),
    );
    let status = bin()
        .arg("quadrature")
        .arg(&config)
        .env("LSDR_NODE_BUDGET", "1000000")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in walk(&root) {
        let text = std::fs::read_to_string(&entry).unwrap();
        let parsed: Result<lsdr::harness::ExperimentConfig, _> = serde_json::from_str(&text);
        assert!(
            parsed.is_ok(),
            "config {entry:?} does not parse: {parsed:?}"
        );
        seen += 1;
    }
    assert!(seen >= 6, "expected shipped configs, found {seen}");
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out
}
