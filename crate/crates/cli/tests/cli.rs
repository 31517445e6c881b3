use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftr_mock::{BugCatalog, MockServer, DEMO_TOKEN};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fuzz-the-rest"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_spec(dir: &Path, base: &str) -> PathBuf {
    let p = dir.join("openapi.yaml");
    std::fs::write(&p, ftr_mock::openapi_for(base)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fuzz_writes_report_and_exits_one_on_findings() {
    let server = MockServer::start(0, BugCatalog::v1()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &server.base_url());
    let report = dir.path().join("report.json");
    let qdump = dir.path().join("q.json");
    let events = dir.path().join("events.jsonl");
    let out = run(&[
        "fuzz", "--spec", s(&spec), "--seed", "7", "--budget", "40", "--token", DEMO_TOKEN,
        "--report-out", s(&report), "--dump-qtable", s(&qdump), "--event-log", s(&events), "--summary",
    ]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["totals"]["total_requests"], 7 * 40);
    assert!(r["totals"]["total_findings"].as_u64().unwrap() >= 1);
    assert_eq!(r["run"]["bearer_token"], "<redacted>");
    let findings = r["findings"].as_array().unwrap();
    assert!(findings.iter().all(|f| !f["reproducer"]["raw_request"].as_str().unwrap().is_empty()));

    let q: Value = serde_json::from_slice(&std::fs::read(&qdump).unwrap()).unwrap();
    assert_eq!(q["qtables"].as_object().unwrap().len(), 7);

    let lines = std::fs::read_to_string(&events).unwrap();
    let exchanges = lines.lines().filter(|l| l.contains(r#""event":"exchange""#)).count();
    assert_eq!(exchanges, 7 * 40);

    // The summary printed during the run is what `report` re-renders.
    let again = run(&["report", s(&report)]);
    assert_eq!(code(&again), 0);
    assert_eq!(again.stdout, out.stdout);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("fuzz-the-rest"));
}

#[test]
fn zero_budget_sends_nothing() {
    let dir = tempfile::tempdir().unwrap();
    // Nothing listens here; with no budget the target is never contacted.
    let spec = write_spec(dir.path(), "http://127.0.0.1:9");
    let report = dir.path().join("r.json");
    let out = run(&["fuzz", "--spec", s(&spec), "--budget", "0", "--report-out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["totals"]["total_requests"], 0);
    assert_eq!(r["findings"], serde_json::json!([]));
}

#[test]
fn unreachable_target_exits_two_without_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "http://127.0.0.1:9");
    let report = dir.path().join("r.json");
    let out = run(&["fuzz", "--spec", s(&spec), "--budget", "20", "--report-out", s(&report)]);
    assert_eq!(code(&out), 2);
    assert!(!report.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
}

#[test]
fn config_file_with_flag_overrides() {
    let server = MockServer::start(0, BugCatalog::none()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &server.base_url());
    let yaml = dir.path().join("cfg.yaml");
    std::fs::write(
        &yaml,
        format!("spec: {}\nbudget: 30\nseed: 1\npopulation_size: 5\nheaders: ['X-Run: yaml']\n", spec.display()),
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["fuzz", "--config", s(&yaml), "--budget", "12", "--report-out", s(&report)]);
    // Every bug disarmed: nothing should be 5xx, but schema or status
    // findings are still possible, so only config errors are ruled out.
    assert_ne!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["totals"]["total_episodes"], 7 * 12);
    assert_eq!(r["run"]["agent"]["population_size"], 5);
    assert_eq!(r["run"]["seed"], 1);

    let json = dir.path().join("cfg.json");
    std::fs::write(&json, serde_json::json!({"spec": spec, "budget": 0}).to_string()).unwrap();
    assert_eq!(code(&run(&["fuzz", "--config", s(&json)])), 0);

    let bad = dir.path().join("bad.yaml");
    std::fs::write(&bad, "budgett: 3\n").unwrap();
    assert_eq!(code(&run(&["fuzz", "--config", s(&bad)])), 2);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "http://127.0.0.1:9");
    let cases: Vec<Vec<&str>> = vec![
        vec!["fuzz"],
        vec!["fuzz", "--spec", "/no/such/file.yaml"],
        vec!["fuzz", "--spec", s(&spec), "--coverage-url", "http://x/c", "--coverage-file", "/tmp/c"],
        vec!["fuzz", "--spec", s(&spec), "--header", "no-colon"],
        vec!["fuzz", "--spec", s(&spec), "--budget", "5", "--population-size", "10"],
        vec!["fuzz", "--spec", s(&spec), "--timeout-ms", "0"],
        vec!["fuzz", "--spec", s(&spec), "--alpha", "1.5"],
        vec!["fuzz", "--spec", s(&spec), "--base-url", "not a url"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn validate_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "http://127.0.0.1:8080");
    let out = run(&["validate", "--spec", s(&spec)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("7 operations"));

    let scenarios = dir.path().join("s.yaml");
    std::fs::write(&scenarios, ftr_mock::SCENARIOS).unwrap();
    assert_eq!(code(&run(&["validate", "--spec", s(&spec), "--scenarios", s(&scenarios)])), 0);

    std::fs::write(&scenarios, "- name: x\n  steps:\n    - operation: nope\n").unwrap();
    assert_eq!(code(&run(&["validate", "--spec", s(&spec), "--scenarios", s(&scenarios)])), 2);

    let broken = dir.path().join("broken.yaml");
    std::fs::write(&broken, "openapi: 3.0.0\npaths: [\n").unwrap();
    assert_eq!(code(&run(&["validate", "--spec", s(&broken)])), 2);
}

#[test]
fn mock_prints_its_documents() {
    let out = run(&["mock", "--port", "18123", "--print-spec"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("http://127.0.0.1:18123"));
    let out = run(&["mock", "--print-scenarios"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), ftr_mock::SCENARIOS);
    assert_eq!(code(&run(&["mock", "--disable", "B9", "--port", "0"])), 2);
}

#[test]
fn report_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.json");
    std::fs::write(&p, "{}").unwrap();
    assert_eq!(code(&run(&["report", s(&p)])), 2);
}
