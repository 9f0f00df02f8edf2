use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn feddro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feddro")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const COUNTER: &str = r#"
algorithm = "fedavg-case1"
x0 = [0.5]

[problem]
kind = "counterexample"

[hyper]
mode = "fixed"
horizon = 100
eta = 0.02
local_period = 2
batch_h = "full"
batch_g = "full"
"#;

#[test]
fn run_writes_trace_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTER);
    let out = dir.path().join("out");
    let o = feddro(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    // Header plus 100 + 1 rows at cadence 1.
    assert_eq!(trace.lines().count(), 102);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert!(meta["min_sync_x0"].as_f64().unwrap() >= 0.5);
    assert!(out.join("timing.json").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &COUNTER.replace("fedavg-case1", "fedprox"));
    let o = feddro(&["run", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fedprox"));

    let missing = feddro(&["run", "--config", "/nonexistent/x.toml", "--out", "/tmp/x"]);
    assert_eq!(missing.status.code(), Some(2));

    let no_out = feddro(&["run", "--config", &write(dir.path(), "ok.toml", COUNTER)]);
    assert_eq!(no_out.status.code(), Some(1));
}

#[test]
fn verify_passes() {
    let o = feddro(&["verify", "--counterexample-only"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
}

#[test]
fn sweep_over_local_period_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTER);
    let root = dir.path().join("sweep");
    let o = feddro(&[
        "sweep",
        "--config",
        &cfg,
        "--axis",
        "I",
        "--values",
        "2,4",
        "--seeds",
        "1,2",
        "--out",
        root.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    for rec in rdr.deserialize::<feddro::harness::SummaryRow>() {
        assert!(rec.unwrap().min_sync_x0.unwrap() >= 0.5);
    }

    fs::remove_file(root.join("summary.csv")).unwrap();
    let o = feddro(&["report", "--dir", root.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(root.join("summary.csv")).unwrap(), summary);
}

#[test]
fn sweep_rejects_period_beyond_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTER);
    let o = feddro(&[
        "sweep",
        "--config",
        &cfg,
        "--axis",
        "I",
        "--values",
        "500",
        "--out",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
