use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn paritysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paritysim"))
        .args(args)
        .env_remove("ZP_CONFIG")
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body_lines(o: &Output) -> Vec<String> {
    stdout(o).lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn nchv_bound_prints_three_and_a_maximizer() {
    let o = paritysim(&["nchv-bound"]);
    assert_eq!(o.status.code(), Some(0));
    let lines = body_lines(&o);
    assert_eq!(lines[0], "3");
    let v: Vec<i32> = lines[1..11]
        .iter()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    // x1 y1 x2 y2 x3 y3 P1 P2 P3 P4
    let c = v[0] * v[3] * v[5] * v[6] + v[1] * v[2] * v[5] * v[7] + v[1] * v[3] * v[4] * v[8]
        + v[0] * v[2] * v[4] * v[9]
        - v[6] * v[7] * v[8] * v[9];
    assert_eq!(c, 3);
}

#[test]
fn ideal_ghz_text_report() {
    let cfg = configs().join("ideal.toml");
    let o = paritysim(&["ghz", "--engine", "exact", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<String> = body_lines(&o)
        .into_iter()
        .filter(|l| l.contains("0.125000") && l.contains("1.000000"))
        .collect();
    assert_eq!(rows.len(), 8);
}

#[test]
fn sampled_reports_are_byte_identical() {
    let cfg = configs().join("tuned.toml");
    let cfg = cfg.to_str().unwrap();
    let base = ["single-shot", "--engine", "sampled", "--trials", "100000", "--seed", "7", "--format", "json", "--config", cfg];
    let a = paritysim(&base);
    let b = paritysim(&base);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    for threads in ["1", "3"] {
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        assert_eq!(paritysim(&args).stdout, a.stdout, "threads={threads}");
    }
    let other = paritysim(&["single-shot", "--engine", "sampled", "--trials", "100000", "--seed", "8", "--format", "json", "--config", cfg]);
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn every_format_embeds_the_config_hash() {
    let path = configs().join("tuned.toml");
    let want: String = Sha256::digest(std::fs::read(&path).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    let p = path.to_str().unwrap();
    let json = paritysim(&["nci", "--config", p, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["manifest"]["config_sha256"], want.as_str());
    assert_eq!(v["manifest"]["command"], "nci");
    assert_eq!(v["manifest"]["mode"], "echoed");
    assert!(v["manifest"]["timestamp"].is_null());
    for format in ["csv", "text"] {
        let out = stdout(&paritysim(&["nci", "--config", p, "--format", format]));
        assert!(out.lines().any(|l| l.starts_with('#') && l.contains(&want)), "{format}");
    }
}

#[test]
fn config_from_environment_and_flag_override() {
    let tuned = configs().join("tuned.toml");
    let ideal = configs().join("ideal.toml");
    let run = |extra: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_paritysim"))
            .args(["ghz", "--format", "json"])
            .args(extra)
            .env("ZP_CONFIG", &tuned)
            .env_remove("SOURCE_DATE_EPOCH")
            .output()
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["result"]["average_fidelity"].as_f64().unwrap()
    };
    assert!(run(&[]) < 0.9);
    assert!((run(&["--config", ideal.to_str().unwrap()]) - 1.0).abs() < 1e-9);
}

#[test]
fn timestamp_comes_from_source_date_epoch() {
    let o = Command::new(env!("CARGO_BIN_EXE_paritysim"))
        .args(["nchv-bound", "--format", "json"])
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["manifest"]["timestamp"], 1_700_000_000u64);
}

#[test]
fn csv_columns_are_fixed() {
    let o = paritysim(&["ghz", "--format", "csv"]);
    let out = stdout(&o);
    assert!(out.starts_with("# paritysim-bars v1\n"));
    let body = body_lines(&o);
    assert_eq!(body[0], "label,value,standard_error");
    assert_eq!(body.len(), 9);
    assert!(body[1].starts_with("+++,"));
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let o = paritysim(&["zeno", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(v["result"].as_array().unwrap().len(), 4);
}

#[test]
fn validate_config_names_the_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[readout]\nq0 = 1.5\n").unwrap();
    let o = paritysim(&["validate-config", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("q0"));

    std::fs::write(&bad, "[gates]\np_gates = 0.1\n").unwrap();
    let o = paritysim(&["validate-config", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_gates"));

    let good = configs().join("tuned.toml");
    let o = paritysim(&["validate-config", "--config", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok "));

    let missing = dir.path().join("absent.toml");
    let o = paritysim(&["ghz", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["frobnicate"],
        vec!["ghz", "--no-such-flag"],
        vec!["ghz", "--engine", "sampled"],
        vec!["ghz", "--mode", "sideways"],
        vec!["nci", "--mode", "branched"],
        vec![],
    ] {
        let o = paritysim(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn calibrate_recovers_simulated_factors() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.csv");
    let o = paritysim(&[
        "calibrate",
        "--trials",
        "50000",
        "--seed",
        "3",
        "--format",
        "json",
        "--save-records",
        records.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["q0", "q1", "f0", "f1"] {
        let fit = v["result"]["fit"]["factors"][key].as_f64().unwrap();
        let truth = v["result"]["truth"][key].as_f64().unwrap();
        assert!((fit - truth).abs() < 0.02, "{key}: {fit} vs {truth}");
    }
    let header = std::fs::read_to_string(&records).unwrap();
    assert!(header.starts_with("r1,r2,r3,prepared"));

    // Refitting the saved records reproduces the fit.
    let again = paritysim(&["calibrate", "--seed", "3", "--format", "json", "--records", records.to_str().unwrap()]);
    let w: serde_json::Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(w["result"]["fit"]["factors"], v["result"]["fit"]["factors"]);
}
