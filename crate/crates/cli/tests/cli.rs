//! End-to-end tests that drive the compiled `ttscore` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use ttscore_core::model::fixtures;
use ttscore_core::model::save_scenario;
use ttscore_core::{parse_scenario, validate_scenario, FaultModel, ScoreReport};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ttscore"));
    // Tests control worker counts explicitly; a leaked override would not.
    cmd.env_remove("TTSCORE_WORKERS");
    cmd
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn ttscore");
    assert!(
        out.status.success(),
        "expected success for {args:?}, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn ttscore");
    assert!(!out.status.success(), "expected failure for {args:?}");
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_unit_link(dir: &Path) -> PathBuf {
    let path = dir.join("unit-link.json");
    save_scenario(&fixtures::unit_link(), &path).unwrap();
    path
}

#[test]
fn score_reports_the_exact_fixture_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let out = run_ok(&["score", path.to_str().unwrap(), "--method", "wmc"]);
    let report: ScoreReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.method, "wmc");
    assert!((report.score.unwrap() - 0.855).abs() < 1e-9);
    assert!(report.interval.is_none());
    assert_eq!(report.scenario_digest.len(), 64);
    assert!(report.scenario_digest.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(report.tool.starts_with("ttscore "));
    // The human summary goes to stderr, not stdout.
    assert!(String::from_utf8_lossy(&out.stderr).contains("wmc"));
}

#[test]
fn default_method_is_a_seeded_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let out = run_ok(&["score", path.to_str().unwrap()]);
    let report: ScoreReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.method, "monte-carlo");
    // Hoeffding size for the default epsilon = 0.01, delta = 0.99.
    assert_eq!(report.params.samples, Some(23026));
    assert_eq!(report.params.epsilon, Some(0.01));
    assert_eq!(report.params.delta, Some(0.99));
    assert_eq!(report.params.seed, Some(0));
    assert!(report.params.workers.is_some());
    assert!((report.score.unwrap() - 0.855).abs() < 0.01);
}

#[test]
fn reports_validate_against_the_published_schema() {
    let schema_text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/schemas/score-report.schema.json"
    ))
    .unwrap();
    let schema: Value = serde_json::from_str(&schema_text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let unit = write_unit_link(dir.path());
    let par = dir.path().join("parallel.json");
    save_scenario(&fixtures::parallel_two(FaultModel::Permanent, 0.1), &par).unwrap();

    let runs: [&[&str]; 4] = [
        &["score", unit.to_str().unwrap(), "--method", "wmc"],
        &["score", unit.to_str().unwrap(), "--method", "enumerate"],
        &["score", unit.to_str().unwrap(), "--samples", "500"],
        &["score", par.to_str().unwrap(), "--method", "iterative"],
    ];
    for args in runs {
        let report = stdout_json(&run_ok(args));
        let errors: Vec<String> =
            validator.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "schema violations for {args:?}: {errors:?}");
    }
}

#[test]
fn iterative_reports_an_interval_and_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("parallel.json");
    save_scenario(&fixtures::parallel_two(FaultModel::Permanent, 0.1), &path).unwrap();
    let out = run_ok(&["score", path.to_str().unwrap(), "--method", "iterative"]);
    let report: ScoreReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.score.is_none());
    let interval = report.interval.unwrap();
    assert!(interval.contains(0.99), "bracket {interval:?} must contain 0.99");
    let trace = report.k_trace.unwrap();
    assert!(!trace.is_empty());
}

#[test]
fn invalid_scenarios_produce_a_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = fixtures::unit_link();
    s.guarantee = 9; // more messages than exist
    let path = dir.path().join("bad.json");
    save_scenario(&s, &path).unwrap();
    let out = run_err(&["score", path.to_str().unwrap()]);
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(!err["error"]["violations"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unreadable_files_produce_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "not a scenario").unwrap();
    let out = run_err(&["score", garbled.to_str().unwrap()]);
    assert_eq!(stdout_json(&out)["error"]["kind"], "load");

    let missing = dir.path().join("nope.json");
    let out = run_err(&["score", missing.to_str().unwrap()]);
    assert_eq!(stdout_json(&out)["error"]["kind"], "load");
}

#[test]
fn compare_emits_csv_with_a_small_cross_method_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let out = run_ok(&[
        "compare",
        path.to_str().unwrap(),
        "--methods",
        "enumerate,monte-carlo",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,score,lower,upper,error_vs_first,duration_secs"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "enumerate");
    assert_eq!(rows[1][0], "monte-carlo");
    let exact_err: f64 = rows[0][4].parse().unwrap();
    assert_eq!(exact_err, 0.0); // the first row is its own reference
    let mc_err: f64 = rows[1][4].parse().unwrap();
    assert!(mc_err.abs() <= 0.01, "monte-carlo off by {mc_err}");
}

#[test]
fn generate_is_deterministic_and_valid() {
    let first = run_ok(&["generate", "--vertices", "4", "--seed", "1"]);
    let second = run_ok(&["generate", "--vertices", "4", "--seed", "1"]);
    assert_eq!(first.stdout, second.stdout);
    let s = parse_scenario(&String::from_utf8(first.stdout.clone()).unwrap()).unwrap();
    assert!(validate_scenario(&s).is_empty());
    assert_eq!(s.network.vertices.len(), 4);

    let other = run_ok(&["generate", "--vertices", "4", "--seed", "2"]);
    assert_ne!(first.stdout, other.stdout, "seeds must matter");
}

#[test]
fn reduce_then_score_recovers_the_example_clause() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("clause.cnf");
    std::fs::write(&cnf, "c one clause over three variables\np cnf 3 1\n1 2 3 0\n").unwrap();
    let scenario = dir.path().join("reduced.json");
    let out = run_ok(&[
        "reduce-3cnf",
        cnf.to_str().unwrap(),
        "--out",
        scenario.to_str().unwrap(),
    ]);
    assert!(out.stdout.is_empty(), "--out redirects the scenario away from stdout");

    let out = run_ok(&["score", scenario.to_str().unwrap(), "--method", "enumerate"]);
    let report: ScoreReport = serde_json::from_slice(&out.stdout).unwrap();
    // 7 of 8 assignments satisfy (x1 | x2 | x3): the score is 1/8.
    assert!((report.score.unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn emitted_cnf_is_stable_and_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let first = run_ok(&["emit-cnf", path.to_str().unwrap()]);
    let second = run_ok(&["emit-cnf", path.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("p cnf ") || text.starts_with("c "), "text: {text}");
    let wf = ttscore_core::load_weighted_dimacs(text.as_bytes()).unwrap();
    wf.check_weights().unwrap();
}

#[test]
fn worker_count_does_not_change_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let base = ["score", path.to_str().unwrap(), "--samples", "2000", "--seed", "7"];
    let one: ScoreReport =
        serde_json::from_slice(&run_ok(&[&base[..], &["--workers", "1"]].concat()).stdout)
            .unwrap();
    let four: ScoreReport =
        serde_json::from_slice(&run_ok(&[&base[..], &["--workers", "4"]].concat()).stdout)
            .unwrap();
    assert_eq!(one.score, four.score);
    assert_eq!(one.params.workers, Some(1));
    assert_eq!(four.params.workers, Some(4));
}

#[test]
fn worker_env_override_is_honoured_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let out = bin()
        .args(["score", path.to_str().unwrap(), "--samples", "100"])
        .env("TTSCORE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: ScoreReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.params.workers, Some(3));

    let out = bin()
        .args(["score", path.to_str().unwrap(), "--samples", "100"])
        .env("TTSCORE_WORKERS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["kind"], "parameter");
}

#[test]
fn validate_reports_summaries_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_unit_link(dir.path());
    let out = run_ok(&["validate", good.to_str().unwrap()]);
    let summary = stdout_json(&out);
    assert_eq!(summary["valid"], true);
    assert_eq!(summary["vertices"], 2);
    assert_eq!(summary["edges"], 1);
    assert_eq!(summary["messages"], 1);

    let mut s = fixtures::unit_link();
    s.timeout = 0;
    let bad = dir.path().join("bad.json");
    save_scenario(&s, &bad).unwrap();
    let out = run_err(&["validate", bad.to_str().unwrap()]);
    let summary = stdout_json(&out);
    assert_eq!(summary["valid"], false);
    assert!(!summary["violations"].as_array().unwrap().is_empty());
}

#[test]
fn dump_outcome_traces_one_slot_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_link(dir.path());
    let out = run_ok(&[
        "score",
        path.to_str().unwrap(),
        "--method",
        "enumerate",
        "--dump-outcome",
        "--seed",
        "5",
    ]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    // timeout = 1: the initial configuration plus one slot.
    assert!(stderr.contains("slot 0: m1@u"));
    assert!(stderr.contains("slot 1:"));
    assert!(stderr.contains("arrivals:"));
}
