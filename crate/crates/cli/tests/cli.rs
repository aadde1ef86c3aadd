//! End-to-end runs of the `rankhom` binary on the bundled scenarios.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

struct Run {
    status: i32,
    report: Value,
    raw: String,
    output: Output,
}

fn rankhom(dir: &TempDir, args: &[&str], scenario_path: &Path, env: &[(&str, &str)]) -> Run {
    let out = dir.path().join("report.json");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rankhom"));
    cmd.args(args)
        .arg("--scenario")
        .arg(scenario_path)
        .arg("--out")
        .arg(&out)
        .env_remove("RANKHOM_RANK_THRESHOLD")
        .env_remove("RANKHOM_RESIDUAL_TOL")
        .env_remove("RANKHOM_MAX_SWEEPS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let output = cmd.output().expect("binary runs");
    let raw = std::fs::read_to_string(&out).unwrap_or_default();
    let report = serde_json::from_str(&raw).unwrap_or(Value::Null);
    Run {
        status: output.status.code().expect("exit code"),
        report,
        raw,
        output,
    }
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .and_then(|cs| cs.iter().find(|c| c["name"] == name))
        .unwrap_or_else(|| panic!("no check {name} in {report}"))
}

fn write_scenario(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn membership_passes_with_exit_zero() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["membership"], &scenario("circle_window.json"), &[]);
    assert_eq!(r.status, 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    assert_eq!(r.report["pass"], true);
    assert_eq!(r.report["tool"], "rankhom");
    assert_eq!(r.report["command"], "membership");
    assert_eq!(check(&r.report, "membership")["pass"], true);
    assert!(r.report["error"].is_null());
}

#[test]
fn fixed_report_is_byte_identical_and_has_no_timing() {
    let dir = TempDir::new().unwrap();
    let a = rankhom(&dir, &["stratify", "--fixed-report"], &scenario("circle_window.json"), &[]);
    let b = rankhom(&dir, &["stratify", "--fixed-report"], &scenario("circle_window.json"), &[]);
    assert_eq!(a.status, 0);
    assert_eq!(a.raw, b.raw);
    assert!(a.report.get("timing").is_none_or(Value::is_null));
    let timed = rankhom(&dir, &["stratify"], &scenario("circle_window.json"), &[]);
    assert!(timed.report["timing"]["elapsed_seconds"].is_number());
}

#[test]
fn seed_and_depth_flags_override_the_scenario() {
    let dir = TempDir::new().unwrap();
    let base = rankhom(&dir, &["membership", "--fixed-report"], &scenario("circle_window.json"), &[]);
    let other = rankhom(
        &dir,
        &["membership", "--fixed-report", "--seed", "7", "--depth", "1"],
        &scenario("circle_window.json"),
        &[],
    );
    assert_eq!(base.report["effective"]["seed"], 1);
    assert_eq!(other.report["effective"]["seed"], 7);
    assert_eq!(other.report["effective"]["depth"], 1);
    assert_ne!(base.report["inputs_digest"], other.report["inputs_digest"]);
}

#[test]
fn environment_overrides_tolerance_defaults() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(
        &dir,
        &["membership", "--fixed-report"],
        &scenario("circle_window.json"),
        &[("RANKHOM_RANK_THRESHOLD", "1e-7")],
    );
    assert_eq!(r.report["effective"]["tolerances"]["rank_threshold"], 1e-7);
    let bad = rankhom(
        &dir,
        &["membership"],
        &scenario("circle_window.json"),
        &[("RANKHOM_RANK_THRESHOLD", "abc")],
    );
    assert_ne!(bad.status, 0);
    assert_eq!(bad.report["pass"], false);
    assert!(bad.report["error"]["message"].as_str().unwrap().contains("RANKHOM_RANK_THRESHOLD"));
}

#[test]
fn scenario_tolerances_take_precedence_over_environment() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("circle_window.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["tolerances"] = serde_json::json!({"rank_threshold": 1e-6});
    let p = write_scenario(&dir, &v.to_string());
    let r = rankhom(&dir, &["membership"], &p, &[("RANKHOM_RANK_THRESHOLD", "1e-7")]);
    assert_eq!(r.report["effective"]["tolerances"]["rank_threshold"], 1e-6);
}

#[test]
fn tautological_sphere_has_chern_number_one() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["chern", "--fixed-report"], &scenario("tautological_sphere.json"), &[]);
    assert_eq!(r.status, 0, "{}", r.raw);
    let c = r.report["results"]["value"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 1e-6, "{c}");
    assert_eq!(check(&r.report, "matches_expected")["pass"], true);
}

#[test]
fn tautological_contraction_is_refused_with_certificate() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["contract", "--fixed-report"], &scenario("tautological_sphere.json"), &[]);
    assert_eq!(r.status, 1);
    let c = check(&r.report, "contraction");
    assert_eq!(c["pass"], false);
    assert_eq!(c["certificate"]["kind"], "dimension_hypothesis");
    let chern = c["certificate"]["details"]["obstruction"]["rounded"].as_f64().unwrap();
    assert_eq!(chern, 1.0);
}

#[test]
fn connect_writes_rfc4180_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("path.csv");
    let r = rankhom(
        &dir,
        &["connect", "--fixed-report", "--csv", csv.to_str().unwrap()],
        &scenario("circle_window.json"),
        &[],
    );
    assert_eq!(r.status, 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    assert_eq!(check(&r.report, "path_membership")["pass"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.split("\r\n");
    assert_eq!(
        lines.next().unwrap(),
        "segment,step,t,sample,x0,x1,x2,lambda_1,lambda_2,lambda_3,lambda_4"
    );
    assert!(text.ends_with("\r\n"));
    assert!(!text.replace("\r\n", "").contains('\n'));
    let rows: Vec<&str> = text.trim_end().split("\r\n").skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').count() == 11));
}

#[test]
fn gap_hit_one_level_finer_fails_the_check() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["gap", "--fixed-report"], &scenario("explicit_edge.json"), &[]);
    assert_eq!(r.status, 1);
    assert_eq!(check(&r.report, "eta_positive")["pass"], true);
    let finer = check(&r.report, "rank_at_least_l_one_level_finer");
    assert_eq!(finer["pass"], false);
    assert!(!finer["diagnostics"]["gap_hits"].as_array().unwrap().is_empty());
}

#[test]
fn operation_error_is_embedded_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["chern"], &scenario("explicit_edge.json"), &[]);
    assert_eq!(r.status, 1);
    assert_eq!(r.report["pass"], false);
    assert!(r.report["error"]["message"].is_string());
}

#[test]
fn unsupported_schema_version_exits_two() {
    let dir = TempDir::new().unwrap();
    let p = write_scenario(&dir, r#"{"schema_version": 99, "window": {"n": 2, "k": 1, "l": 1}}"#);
    let r = rankhom(&dir, &["membership"], &p, &[]);
    assert_eq!(r.status, 2);
    assert_eq!(r.report["pass"], false);
    assert_eq!(r.report["error"]["kind"], "schema_version");
}

#[test]
fn malformed_and_invalid_scenarios_exit_two() {
    let dir = TempDir::new().unwrap();
    for (text, kind) in [
        ("{not json", "parse"),
        (r#"{"window": {"n": 2, "k": 1, "l": 1}}"#, "validation"),
        (r#"{"schema_version": 1, "window": {"n": 2, "k": 1, "l": 1}, "extra": 0}"#, "validation"),
        (r#"{"schema_version": 1, "window": {"n": 2, "k": 1, "l": 3}}"#, "field"),
    ] {
        let p = write_scenario(&dir, text);
        let r = rankhom(&dir, &["stratify"], &p, &[]);
        assert_eq!(r.status, 2, "{text}");
        assert_eq!(r.report["error"]["kind"], kind, "{text}");
        assert!(!r.output.stderr.is_empty());
    }
}

#[test]
fn missing_scenario_file_exits_two() {
    let dir = TempDir::new().unwrap();
    let r = rankhom(&dir, &["stratify"], &dir.path().join("absent.json"), &[]);
    assert_eq!(r.status, 2);
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_rankhom"))
        .args(["frobnicate", "--scenario", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_suite_subset_reports_each_criterion() {
    let dir = TempDir::new().unwrap();
    let p = write_scenario(
        &dir,
        r#"{"schema_version": 1, "window": {"n": 2, "k": 1, "l": 1}, "options": {"criteria": [4, 7]}}"#,
    );
    let r = rankhom(&dir, &["verify-suite", "--fixed-report"], &p, &[]);
    assert_eq!(r.status, 0, "{}", r.raw);
    let names: Vec<&str> = r.report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["criterion_4", "criterion_7"]);
}
