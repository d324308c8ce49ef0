use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).output().unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn validate_accepts_shipped_config() {
    let out = sim(&["validate", configs().join("fig6.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("150 runs"));
}

#[test]
fn validate_rejects_bad_config_with_config_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "node_counts = [1]\n").unwrap();
    let out = sim(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&path, "node_counts = [4]\nnot_a_field = 1\n").unwrap();
    assert_eq!(sim(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "name = \"small\"\nnode_counts = [4]\nduration_s = 0.01\nreplications = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let trace = dir.path().join("trace.tsv");
    let out = sim(&[
        "run",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--replications",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().next().unwrap().contains("network_throughput_bps"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["groups"].as_array().unwrap().len(), 3);
    let trace = fs::read_to_string(trace).unwrap();
    assert_eq!(trace.lines().filter(|l| l.starts_with("# run")).count(), 3);
    assert!(trace.contains("tx-start\tRTS dst="));
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "node_counts = [5]\nduration_s = 0.02\nreplications = 2\n").unwrap();
    let mut csvs = Vec::new();
    for k in 0..2 {
        let o = dir.path().join(format!("o{k}"));
        assert!(sim(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]).status.success());
        csvs.push(fs::read(o.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn powerctl_writes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["powerctl", configs().join("fig7_linkspec.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("powerctl.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 81);
}

#[test]
fn missing_file_fails() {
    let out = sim(&["run", "/nonexistent/config.toml"]);
    assert!(!out.status.success());
}
