use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kpzlab::report::Table;
use serde_json::Value;

fn kpzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpzlab"))
        .args(args)
        .env_remove("KPZLAB_K_SIGMA")
        .env_remove("KPZLAB_LIMIT_TOL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rate_deterministic_example() {
    let o = kpzlab(&["rate", "--family", "deterministic", "--s", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1.885618"), "{}", stdout(&o));
}

#[test]
fn lyapunov_brownian_example() {
    let o = kpzlab(&["lyapunov", "--family", "brownian", "--a", "0", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    assert_eq!(line.split_whitespace().nth(1), Some("1.25"));
}

#[test]
fn simulate_rejects_zero_time() {
    let o = kpzlab(&["simulate", "--narrow-wedge", "--dx", "1", "--t", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_flag_prints_usage() {
    let o = kpzlab(&["rate", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn out_of_domain_is_a_validation_error() {
    let o = kpzlab(&["rate", "--family", "brownian", "--a", "1", "--s", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_states_sign_convention() {
    let o = kpzlab(&["rate", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("positive"));
}

#[test]
fn rate_csv_round_trips_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = kpzlab(&[
            "rate",
            "--family",
            "brownian",
            "--a",
            "-1",
            "--s-grid",
            "0.05:3:0.05",
            "--out",
            path_str(out),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# {"));
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let t = Table::parse(&text).unwrap();
    assert_eq!(t.header.columns, ["s", "rate", "p_star"]);
    assert_eq!(t.rows.len(), 60);
    assert_eq!(t.header.run["config"]["a"], -1.0);
    // s = 0.3 < a²/2 falls on the deterministic branch
    let r = t.rows.iter().find(|r| (r[0] - 0.3).abs() < 1e-12).unwrap();
    assert!((r[1] - 4.0 * 2f64.sqrt() / 3.0 * 0.3f64.powf(1.5)).abs() < 1e-9);
}

#[test]
fn g_estimate_feeds_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let o = kpzlab(&[
        "g-estimate",
        "--profile",
        r#"{"kind": "brownian", "a_plus": 0.0, "a_minus": 0.0}"#,
        "--p-grid",
        "0.1:4:0.1",
        "--t-schedule",
        "geom:10:1e3:3",
        "--out",
        path_str(&g),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let t = Table::parse(&fs::read_to_string(&g).unwrap()).unwrap();
    for r in &t.rows {
        assert!((r[1] - r[0].powi(3) / 8.0).abs() < 1e-12);
    }
    let o = kpzlab(&[
        "rate",
        "--family",
        "table",
        "--g-table",
        path_str(&g),
        "--s",
        "1",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rate = v["rows"][0]["rate"].as_f64().unwrap();
    let want = 2.0 * 2f64.sqrt() / 3.0;
    assert!((rate - want).abs() < 1e-3, "{rate} vs {want}");
}

#[test]
fn verify_hyp_writes_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("profile.json");
    fs::write(&profile, r#"{"kind": "power_law", "delta": 0.5}"#).unwrap();
    let out = dir.path().join("hyp.json");
    let o = kpzlab(&[
        "verify-hyp",
        "--profile",
        path_str(&profile),
        "--p",
        "1",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["status"], "pass");
    assert_eq!(v["entries"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_is_reproducible_and_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let ens = dir.path().join("e.bin");
    let base = [
        "simulate",
        "--profile",
        r#"{"kind": "flat"}"#,
        "--dx",
        "0.5",
        "--t",
        "1",
        "--times",
        "0.5:1:0.5",
        "--replicas",
        "4000",
        "--seed",
        "3",
    ];
    let mut args_a: Vec<&str> = base.to_vec();
    args_a.extend([
        "--threads",
        "1",
        "--out",
        path_str(&a),
        "--ensemble",
        path_str(&ens),
    ]);
    let mut args_b: Vec<&str> = base.to_vec();
    args_b.extend(["--threads", "2", "--out", path_str(&b)]);
    assert_eq!(kpzlab(&args_a).status.code(), Some(0));
    assert_eq!(kpzlab(&args_b).status.code(), Some(0));
    let ta = fs::read_to_string(&a).unwrap();
    assert_eq!(ta, fs::read_to_string(&b).unwrap());
    let t = Table::parse(&ta).unwrap();
    assert_eq!(t.rows.len(), 4);
    assert_eq!(t.header.summary["status"], "pass");
    let e = kpzlab::sim::read_ensemble(fs::File::open(&ens).unwrap()).unwrap();
    assert_eq!(e.n_replicas, 4000);
    let m = e.estimate_moment(1.0, 0.0).unwrap();
    let row = t.rows.iter().find(|r| r[0] == 1.0 && r[2] == 1.0).unwrap();
    assert_eq!(m.mean, row[3]);
}

#[test]
fn oracle_slope_summary() {
    let o = kpzlab(&[
        "oracle",
        "--mode",
        "second-moment",
        "--profile",
        r#"{"kind": "flat"}"#,
        "--dx",
        "0.5",
        "--t",
        "6",
        "--times",
        "2:6:0.5",
        "--fit-window",
        "2:6",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let slope = v["header"]["summary"]["slope"]["slope"].as_f64().unwrap();
    assert!(slope > 0.1 && slope < 0.4, "{slope}");
}

#[test]
fn ldp_toy_small_run() {
    let o = kpzlab(&[
        "ldp-toy",
        "--s",
        "0.5",
        "--t",
        "50",
        "--replicas",
        "20000",
        "--rel-tol",
        "0.5",
        "--json",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let z = v["rows"][0]["oracle_z"].as_f64().unwrap();
    assert!(z.abs() < 4.0);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
}

#[test]
fn report_bundles() {
    let o = kpzlab(&["report", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["entries"].as_array().unwrap().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let rate = dir.path().join("rate.csv");
    kpzlab(&["rate", "--s-grid", "0.5:1:0.5", "--out", path_str(&rate)]);
    let hyp = dir.path().join("hyp.json");
    fs::write(
        &hyp,
        r#"{"schema": "kpzlab.hyp", "version": 1, "kind": "hyp_report", "status": "pass"}"#,
    )
    .unwrap();
    let bundle = dir.path().join("bundle.json");
    let summary = dir.path().join("summary.csv");
    let o = kpzlab(&[
        "report",
        path_str(&rate),
        path_str(&hyp),
        "--out",
        path_str(&bundle),
        "--summary-csv",
        path_str(&summary),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&bundle).unwrap()).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);
    assert_eq!(v["overall"], "pass");
    assert_eq!(fs::read_to_string(&summary).unwrap().lines().count(), 3);

    let old = dir.path().join("old.json");
    fs::write(
        &old,
        r#"{"schema": "kpzlab.hyp", "version": 0, "kind": "hyp_report"}"#,
    )
    .unwrap();
    let o = kpzlab(&["report", path_str(&rate), path_str(&old)]);
    assert_eq!(o.status.code(), Some(2));
}
