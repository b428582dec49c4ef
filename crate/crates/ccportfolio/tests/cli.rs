//! Black-box tests of the installed binary: exit codes, stream contents,
//! and cross-process determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccportfolio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/nifty_quarterly.csv")
}

#[test]
fn estimate_recovers_the_published_moments_from_the_fixture() {
    let output = run(&["estimate", "--prices", fixture().to_str().unwrap()]);
    assert!(output.status.success());
    let doc = stdout_json(&output);
    let mu0: Vec<f64> = doc["mu0"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (found, expected) in mu0.iter().zip([2.609, -1.430, 6.329]) {
        assert!((found - expected).abs() < 1e-8, "mu0 {mu0:?}");
    }
    assert_eq!(doc["assets"].as_array().unwrap().len(), 3);
}

#[test]
fn estimate_reports_the_offending_line_of_a_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "date,asset,price\n2020-01-31,a,100\nnot-a-date,a,101\n").unwrap();
    let output = run(&["estimate", "--prices", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn estimate_rejects_an_observation_free_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "date,asset,price\n").unwrap();
    let output = run(&["estimate", "--prices", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("at least 2 return periods"),
        "stderr: {stderr}"
    );
}

#[test]
fn solve_piecewise_linear_emits_the_expected_solution() {
    let output = run(&[
        "solve",
        "--preset",
        "paper",
        "--kind",
        "piecewise_linear",
        "--tau",
        "1.5",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let doc = stdout_json(&output);
    assert_eq!(doc["status"], "optimal");
    let risk = doc["objective"].as_f64().unwrap();
    assert!((risk - 3.3142).abs() < 5e-3, "risk {risk}");
}

#[test]
fn solve_reports_infeasibility_with_a_certificate_and_exit_3() {
    let output = run(&[
        "solve", "--preset", "paper", "--kind", "bernstein", "--tau", "3.5",
    ]);
    assert_eq!(output.status.code(), Some(3));
    let doc = stdout_json(&output);
    assert_eq!(doc["status"], "infeasible");
    let violation = doc["violation"].as_f64().unwrap();
    assert!((violation - 0.1967).abs() < 1e-3, "violation {violation}");
}

#[test]
fn solve_unreachable_nominal_target_exits_3() {
    let output = run(&[
        "solve", "--preset", "paper", "--kind", "nominal", "--tau", "7.329",
    ]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn config_file_drives_the_solve_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{ "preset": "paper", "kind": "bernstein", "tau": 2.5 }"#,
    )
    .unwrap();
    let from_file = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0));
    let risk = stdout_json(&from_file)["objective"].as_f64().unwrap();
    assert!((risk - 7.3316).abs() < 5e-3, "risk {risk}");

    let overridden = run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--kind",
        "piecewise_linear",
    ]);
    assert_eq!(overridden.status.code(), Some(0));
    let risk = stdout_json(&overridden)["objective"].as_f64().unwrap();
    assert!((risk - 4.2386).abs() < 5e-3, "risk {risk}");
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{ "preset": "paper", "taus": 2.5 }"#).unwrap();
    let output = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn frontier_writes_all_three_formats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("frontier.csv");
    let json = dir.path().join("frontier.json");
    let svg = dir.path().join("frontier.svg");
    let output = run(&[
        "frontier",
        "--preset",
        "paper",
        "--kind",
        "bernstein",
        "--tau-range",
        "1.5:3.5:0.2",
        "--out-csv",
        csv.to_str().unwrap(),
        "--out-json",
        json.to_str().unwrap(),
        "--out-svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(lines.next(), Some("tau,x_1,x_2,x_3,risk,status"));
    assert_eq!(csv_text.lines().count(), 12);
    assert!(csv_text.lines().last().unwrap().starts_with("3.5,,,,"));

    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["kind"], "bernstein");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 11);

    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("portfolio risk"));
}

#[test]
fn frontier_defaults_to_csv_on_stdout() {
    let output = run(&[
        "frontier",
        "--preset",
        "paper",
        "--tau-range",
        "1.5:1.9:0.2",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.starts_with("tau,x_1,x_2,x_3,risk,status\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn frontier_runs_are_byte_identical_across_processes() {
    let args = [
        "frontier",
        "--preset",
        "paper",
        "--kind",
        "piecewise_linear",
        "--tau-range",
        "1.5:3.5:0.2",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn frontier_step_zero_is_an_input_error() {
    let output = run(&[
        "frontier", "--preset", "paper", "--tau-range", "1.5:3.5:0",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn frontier_unwritable_path_is_an_input_error() {
    let output = run(&[
        "frontier",
        "--preset",
        "paper",
        "--out-csv",
        "/nonexistent-dir/frontier.csv",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn validate_reads_a_solved_portfolio_and_passes_it() {
    let dir = tempfile::tempdir().unwrap();
    let solution = dir.path().join("solution.json");
    let solved = run(&[
        "solve",
        "--preset",
        "paper",
        "--kind",
        "bernstein",
        "--tau",
        "2.5",
        "--out",
        solution.to_str().unwrap(),
    ]);
    assert_eq!(solved.status.code(), Some(0));

    let report_path = dir.path().join("report.json");
    let output = run(&[
        "validate",
        "--solution",
        solution.to_str().unwrap(),
        "--preset",
        "paper",
        "--tau",
        "2.5",
        "--count",
        "5000",
        "--seed",
        "42",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("distribution"), "stdout: {text}");
    assert!(text.contains("pass"), "stdout: {text}");
    assert!(!text.contains("fail"), "stdout: {text}");

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 11);
}

#[test]
fn validating_an_infeasible_solution_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let solution = dir.path().join("infeasible.json");
    let solved = run(&[
        "solve",
        "--preset",
        "paper",
        "--kind",
        "bernstein",
        "--tau",
        "3.5",
        "--out",
        solution.to_str().unwrap(),
    ]);
    assert_eq!(solved.status.code(), Some(3));
    // the certificate carries the violating point, not a solved portfolio
    let output = run(&[
        "validate",
        "--solution",
        solution.to_str().unwrap(),
        "--preset",
        "paper",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("infeasible"), "stderr: {stderr}");
}

#[test]
fn help_and_bad_flags_use_the_documented_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["solve", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
}
