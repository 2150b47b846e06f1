use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn accelforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accelforge")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = accelforge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn build(dir: &Path) -> String {
    let bench = dir.join("bench");
    ok(&["build-bench", "--out", bench.to_str().unwrap(), "--iterations", "20"]);
    bench.join("manifest.toml").to_str().unwrap().to_string()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = build(dir.path());
    let run = dir.path().join("run");
    let out = ok(&["run", "--manifest", &manifest, "--out", run.to_str().unwrap(), "--seed", "3"]);
    assert!(out.contains("S_p %"));
    for sub in ["candidates", "reports", "database", "audit"] {
        assert!(run.join(sub).is_dir(), "{sub}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tasks"].as_array().unwrap().len(), 18);

    let table = ok(&["report", run.to_str().unwrap()]);
    let header = table.lines().next().unwrap();
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(cols, ["L1", "L2", "L3", "L4", "L5", "Avg."]);
    assert!(table.contains("error histogram"));
    let json: serde_json::Value = serde_json::from_str(&ok(&["report", run.to_str().unwrap(), "--json"])).unwrap();
    assert_eq!(json["tasks"], 18);
}

#[test]
fn task_failures_still_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = build(dir.path());
    let run = dir.path().join("run");
    // one debug attempt, no GA: most optimization tasks fail
    ok(&["run", "--manifest", &manifest, "--out", run.to_str().unwrap(), "--ga", "false", "--t-code", "1", "--debugging", "false"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert!(summary["suite"]["overall_pass_rate"].as_f64().unwrap() < 1.0);
    assert_eq!(summary["config"]["ga"]["population"], 0);
    assert_eq!(summary["config"]["ga"]["offspring"], 0);
}

#[test]
fn evaluate_reference_passes() {
    let dir = tempfile::tempdir().unwrap();
    build(dir.path());
    let task = dir.path().join("bench/tasks/L2-stablediffusion-featurereuse.toml");
    let text = fs::read_to_string(&task).unwrap();
    let spec: toml::Value = toml::from_str(&text).unwrap();
    let cand = dir.path().join("reference.py");
    fs::write(&cand, spec["reference_code"].as_str().unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["evaluate", "--task", task.to_str().unwrap(), "--candidate", cand.to_str().unwrap()])).unwrap();
    assert_eq!(report["passed"], true);

    fs::write(&cand, "import torch\npipe = (\n").unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["evaluate", "--task", task.to_str().unwrap(), "--candidate", cand.to_str().unwrap()])).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn sweep_emits_three_by_three_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let table = ok(&["sweep", "--synthetic", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(table.lines().count(), 4);
    let cells: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let cells = cells.as_array().unwrap();
    assert_eq!(cells.len(), 9);
    let mut axes: Vec<(u64, u64)> = cells.iter().map(|c| (c["population"].as_u64().unwrap(), c["generations"].as_u64().unwrap())).collect();
    axes.sort();
    let want: Vec<(u64, u64)> = [4, 7, 10].iter().flat_map(|&p| [2, 4, 6].map(|g| (p, g))).collect();
    assert_eq!(axes, want);
}

#[test]
fn tool_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = accelforge(&["run", "--task", "/no/such/task.toml", "--out", out.to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/no/such/task.toml"));
    let bad_cfg = accelforge(&["sweep", "--synthetic", "1", "--offspring", "9", "--populations", "4"]);
    assert!(!bad_cfg.status.success());
    assert!(!accelforge(&["run", "--out", out.to_str().unwrap()]).status.success());
    assert!(!accelforge(&["report", dir.path().to_str().unwrap()]).status.success());
}
