use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairboost"))
}

fn german() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/german.csv")
}

fn config(dir: &Path) -> PathBuf {
    let path = dir.join("grid.toml");
    let text = format!(
        r#"
n_seeds = 2
master_seed = 11

[preprocessors]
include = ["rw", "op"]

[[models]]
type = "logistic"

[ensembles]
pairs = true
all = false

[[datasets]]
preset = "german"
path = "{}"
"#,
        german().display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn error_kind(out: &Output) -> String {
    let v = json(&out.stderr);
    assert_eq!(v["status"], "error");
    v["kind"].as_str().unwrap().to_string()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out.stdout);
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["cells"], 4);
    assert_eq!(summary["reports"], 8);
    for name in ["results.json", "results.csv", "report.md"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }

    let results = out_dir.join("results.json");
    let md = bin().args(["report", "--format", "markdown", "--results"]).arg(&results).output().unwrap();
    assert!(md.status.success());
    let text = String::from_utf8(md.stdout).unwrap();
    assert!(text.contains("| Baseline | OP | RW |"), "{text}");

    let csv = bin().args(["report", "--format", "csv", "--results"]).arg(&results).output().unwrap();
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("dataset,model,pipeline,combiner,seed_index"));
    assert_eq!(text.lines().count(), 1 + 4 * 2);

    let again = bin().args(["report", "--format", "json", "--results"]).arg(&results).output().unwrap();
    assert_eq!(again.stdout, std::fs::read(&results).unwrap());
}

#[test]
fn seeds_and_master_seed_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let run = |seed: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let o = bin()
            .args(["run", "--seeds", "1", "--master-seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(o.status.success());
        assert_eq!(json(&o.stdout)["reports"], 4);
        std::fs::read_to_string(out_dir.join("results.json")).unwrap()
    };
    let a = run("1", "a");
    let b = run("2", "b");
    let c = run("1", "c");
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn evaluate_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let pred = write("pred.csv", "pred\n1\n0\n1\n1\n");
    let truth = write("truth.csv", "1\n0\n0\n1\n");
    let groups = write("groups.csv", "sex\n0\n0\n1\n1\n");
    let out = bin().arg("evaluate").arg("--pred").arg(&pred).arg("--truth").arg(&truth).arg("--groups").arg(&groups).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out.stdout);
    assert_eq!(v["di"].as_f64().unwrap(), 0.5);
    assert_eq!(v["ndi"].as_f64().unwrap(), 0.5);
    assert_eq!(v["f1"].as_f64().unwrap(), 0.8);

    let short = write("short.csv", "1\n0\n");
    let out = bin().arg("evaluate").arg("--pred").arg(&short).arg("--truth").arg(&truth).arg("--groups").arg(&groups).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "length_mismatch");
}

#[test]
fn transform_writes_data_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let csv = dir.path().join("rw.csv");
    let out = bin().args(["transform", "--algo", "rw", "--config"]).arg(&cfg).arg("--in").arg(german()).arg("--out").arg(&csv).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out.stdout)["rows"], 1000);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1001);

    let model = dir.path().join("op.json");
    let out = bin().args(["transform", "--algo", "op", "--config"]).arg(&cfg).arg("--in").arg(german()).arg("--out").arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["algo"], "op");
    assert!(v["rows"].as_array().is_some_and(|r| !r.is_empty()));
}

#[test]
fn errors_are_machine_readable() {
    let out = bin().args(["run", "--config", "/nonexistent/grid.toml", "--out", "/tmp/x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "io");

    let out = bin().args(["transform", "--algo", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_seeds = 0\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&bad).args(["--out", "/tmp/x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "config");

    let junk = dir.path().join("results.json");
    std::fs::write(&junk, "{}").unwrap();
    let out = bin().args(["report", "--format", "csv", "--results"]).arg(&junk).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!error_kind(&out).is_empty());

    assert!(bin().arg("--help").output().unwrap().status.success());
}
