use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carnot_hardy::ineq::InequalityCase;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carnot-hardy"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}

const SMALL_SHARPNESS: &str = r#"{
  "group": {"kind": "abelian", "dim": 3},
  "quadrature": {"rel_tol": 1e-6},
  "sharpness": {"case": "BT_ALPHA", "params": {"p": 2.0, "alpha": 0.0}, "ladder": [10.0], "budget": 12, "restarts": 0
    CLAIM}
}"#;

#[test]
fn vanishing_boundary_gives_zero_boundary_column() {
    let out = TempDir::new().unwrap();
    let cfg = configs().join("ckn_vanishing.json");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.path().join("report.csv"));
    assert_eq!(
        header,
        ["case", "eq_tag", "p", "alpha", "beta", "gamma", "sigma", "eps", "lhs", "rhs", "boundary", "slack", "constant", "pass"]
    );
    assert!(rows.len() >= 20);
    assert!(column(&header, &rows, "boundary").iter().all(|b| b.parse::<f64>().unwrap() == 0.0));
    assert!(column(&header, &rows, "eq_tag").iter().all(|t| *t == InequalityCase::CknBoundary.eq_tag()));
    assert!(out.path().join("report.json").exists());
}

#[test]
fn inadmissible_gamma_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "hckn.json",
        r#"{"group": {"kind": "abelian", "dim": 3},
            "fields": [{"kind": "bump", "center": [0.0, 0.0, 0.0], "radius": 0.5}],
            "cases": [{"case": "HORIZONTAL_CKN", "params": {"p": 2.0, "gamma": 4.0}}]}"#,
    );
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("2<gamma<N"), "{err}");
    assert!(err.contains("cases[0]"), "{err}");
    assert!(stdout(&o).is_empty());
}

#[test]
fn rellich_in_six_dimensions_reports_constant_nine() {
    let o = run(&["verify", "--config", configs().join("rellich_n6.json").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    assert!(!rows.is_empty());
    assert!(column(&header, &rows, "constant").iter().all(|c| *c == "9"));
    assert!(column(&header, &rows, "pass").iter().all(|c| *c == "true"));
}

#[test]
fn empty_check_list_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ids.json", r#"{"group": {"kind": "heisenberg", "dim": 1}, "identities": {"checks": []}}"#);
    let o = run(&["identities", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no checks selected"), "{}", stderr(&o));
}

#[test]
fn claimed_constant_above_the_proven_one_is_a_violation() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "s.json", &SMALL_SHARPNESS.replace("CLAIM", r#", "claimed_constant": 5.0"#));
    let out = dir.path().join("out");
    let o = run(&["sharpness", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.join("sharpness.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&header, &rows, "exceeded"), ["true"]);
}

#[test]
fn single_rung_ladder_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "s.json", &SMALL_SHARPNESS.replace("CLAIM", ""));
    let o = run(&["sharpness", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&header, &rows, "ratio"), ["10"]);
    let f: f64 = column(&header, &rows, "fraction")[0].parse().unwrap();
    assert!(f > 0.0 && f <= 1.0, "{f}");
}

#[test]
fn sharpness_needs_a_fixed_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{"group": {"kind": "abelian", "dim": 3},
            "sharpness": {"case": "UNCERTAINTY", "params": {"p": 2.0}, "ladder": [10.0]}}"#,
    );
    let o = run(&["sharpness", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn list_shows_the_catalog() {
    let o = run(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("RELLICH_GAUGE_L2") && l.contains(InequalityCase::RellichGaugeL2.eq_tag())));

    let o = run(&["list", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 19);
    assert!(entries.iter().any(|e| e["case"] == "RELLICH_GAUGE_L2" && e["eq_tag"] == InequalityCase::RellichGaugeL2.eq_tag()));
}

#[test]
fn malformed_config_reports_line_and_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.json", "{\n  \"group\": {\"kind\": \"abelian\", \"dim\": 3},\n  \"cases\": [,]\n}\n");
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["verify"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--config", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn reports_are_reproducible_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("boundary_terms.json");
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(name);
        let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let csv = std::fs::read(out.join("report.csv")).unwrap();
        let json = std::fs::read(out.join("report.json")).unwrap();
        outputs.push((csv, json));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn zero_jobs_is_rejected() {
    let cfg = configs().join("ckn_vanishing.json");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(1));
}
