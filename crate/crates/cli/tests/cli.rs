use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_pclt");

const TWO_RECTANGLES: &str = r#"{
    "application": "domains",
    "d": 2,
    "windows": [{"kind": "box", "bounds": [[0, 1], [0, 1]]}, {"kind": "box", "bounds": [[0.5, 1.5], [0, 1]]}],
    "alpha": 1.0,
    "epsilon": {"a": 1.0, "b": 0.5},
    "t_grid": [25, 50, 100, 200],
    "replicas": 40,
    "p": 2,
    "master_seed": 11
}"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn pclt(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PCLT_OUT_DIR").output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn pdcheck_on_duplicate_windows_is_singular() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TWO_RECTANGLES.replace("[[0.5, 1.5], [0, 1]]", "[[0, 1], [0, 1]]");
    let cfg = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = pclt(&["pdcheck", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "singular");
    assert_eq!(r["subcommand"], "pdcheck");
}

#[test]
fn clt_writes_report_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TWO_RECTANGLES);
    let out = tmp.path().join("out");
    let o = pclt(&["clt", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "cov.csv", "rates.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let r = report(&out);
    let hash = r["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(r["result"]["target"][0][1], 0.5);
    assert_eq!(r["result"]["entries"].as_array().unwrap().len(), 4);
    assert!(r["result"]["d3_bound_rate"]["slope"].is_number());

    let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    let lines: Vec<&str> = rates.lines().collect();
    assert_eq!(lines[0], format!("# config_hash: {hash}"));
    assert!(lines[1].starts_with("# seed_policy: "));
    assert!(lines[2].starts_with("t,"));
    assert_eq!(lines.len(), 3 + 4);
}

#[test]
fn missing_exponents_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"application": "exponents", "d": 2, "window": {"kind": "box", "bounds": [[0,1],[0,1]]},
            "epsilon": {"a": 1, "b": 0.5}, "t_grid": [10], "replicas": 10, "p": 2, "master_seed": 1}"#,
    );
    let out = tmp.path().join("out");
    let o = pclt(&["clt", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["error"], "validation");
    assert_eq!(diag["field"], "exponents");
    assert!(!out.join("report.json").exists());
}

#[test]
fn rejects_rules_with_bounded_pair_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TWO_RECTANGLES.replace("\"b\": 0.5", "\"b\": 1.2"));
    let o = pclt(&["bounds", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TWO_RECTANGLES);
    let cfg = cfg.to_str().unwrap();
    for sub in ["simulate", "covariance", "bounds", "poincare"] {
        let a = tmp.path().join(format!("{sub}_a"));
        let b = tmp.path().join(format!("{sub}_b"));
        for (dir, threads) in [(&a, "1"), (&b, "3")] {
            let o = pclt(&[sub, "--config", cfg, "--out", dir.to_str().unwrap(), "--threads", threads]);
            assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        }
        for entry in std::fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            let x = std::fs::read(a.join(&name)).unwrap();
            let y = std::fs::read(b.join(&name)).unwrap();
            assert!(x == y, "{sub}: {name:?} differs");
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TWO_RECTANGLES);
    let out = tmp.path().join("out");
    let o = pclt(&["covariance", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    assert_eq!(report(&out)["config"]["master_seed"], 99);
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TWO_RECTANGLES);
    let out = tmp.path().join("from_env");
    let o = Command::new(BIN)
        .args(["pdcheck", "--config", cfg.to_str().unwrap()])
        .env("PCLT_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("report.json").is_file());
}
