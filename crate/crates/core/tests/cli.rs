use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dimer-modes"));
    c.env_remove("DIMER_MODES_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn error_object(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

#[test]
fn spectrum_reproduces_isolated_gap_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["spectrum", "--s1", "1", "--s2", "3", "--m", "10", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 41);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",true")).count(), 1);
    assert_eq!(manifest(dir.path())["summary"]["count_in_gap"], 1);
}

#[test]
fn outputs_reference_the_manifest_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["stability", "--runs", "50", "--seed", "7", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    let hash = m["config_sha256"].as_str().unwrap();
    for (name, sha) in m["files"].as_object().unwrap() {
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(dimer_modes::experiments::sha256_hex(&bytes), sha.as_str().unwrap());
        let text = String::from_utf8(bytes).unwrap();
        if name.ends_with(".csv") {
            assert_eq!(text.lines().next().unwrap(), format!("# config-sha256 {hash}"));
        } else {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_sha256"], hash);
        }
    }
    let agg = &serde_json::from_str::<Value>(&fs::read_to_string(dir.path().join("stability.json")).unwrap()).unwrap()
        ["aggregates"][0];
    for key in ["runs", "eta", "violations_weyl", "violations_dk", "ratio_max"] {
        assert!(agg.get(key).is_some(), "missing {key}");
    }
    for key in ["mean", "min", "max"] {
        assert!(agg["dislocation"].get(key).is_some());
    }
}

#[test]
fn monte_carlo_output_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&[
            "stability",
            "--eta-sweep",
            "0.02:0.2:3",
            "--runs",
            "40",
            "--seed",
            "11",
            "--trials-csv",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let names: Vec<String> = manifest(a.path())["files"].as_object().unwrap().keys().cloned().collect();
    assert!(names.contains(&"trials_002.csv".to_string()));
    for name in names.iter().map(String::as_str).chain(["manifest.json"]) {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            r#"{{"s1": 1, "s2": 3, "m-list": [3, 5, 7], "out-dir": "{}"}}"#,
            out_dir.display()
        ),
    )
    .unwrap();
    let out = run(&["convergence", "--config", cfg.to_str().unwrap(), "--s2", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["config"]["s2"], 2.0);
    assert_eq!(m["config"]["s1"], 1.0);
    assert_eq!(m["config"]["m-list"], serde_json::json!([3, 5, 7]));
    assert_eq!(m["summary"]["sizes"], 3);
}

#[test]
fn config_file_rejects_unknown_and_foreign_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    for text in [r#"{"s3": 1}"#, r#"{"eta": 0.1}"#, r#"{"command": "stability"}"#] {
        fs::write(&cfg, text).unwrap();
        let out = run(&["gap", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert_eq!(error_object(&out)["error"]["category"], "invalid-geometry");
    }
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["indicator", "--dimers", "5"])
        .env("DIMER_MODES_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("indicator.csv").exists());
}

#[test]
fn error_categories_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["gap", "--s1=-1", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_object(&out)["error"]["category"], "invalid-geometry");

    let out = run(&["gap", "--s1", "2", "--s2", "1", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_object(&out)["error"]["category"], "empty-gap");

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = run(&["indicator", "--dimers", "4", "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_object(&out)["error"]["category"], "io");

    let out = run(&["gap", "--not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let out = run(&["stability", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--s1", "--s2", "--ell", "--v-b", "--delta", "--m", "--eta", "--eta-sweep", "--runs", "--seed", "--trials-csv", "--out-dir", "--config"] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn modes_report_signed_distance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["modes", "--m", "2", "--lambda", "1.2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[4][3], "0");
    assert_eq!(rows[0][3], "-4");
    assert_eq!(rows[8][4], "10.0");
    assert_eq!(rows[0][4], "-10.0");
}
