use std::path::PathBuf;
use std::process::{Command, Output};

use cqt::scenario::Scenario;
use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn cqt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqt")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn check_exit_codes() {
    let two = scenario("two_slit.json");
    let out = cqt(&["check", two.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout(&out);
    assert!(text.contains("verdict: Inconsistent"));
    assert!(text.contains("worst pair: (1,1) (2,1)"));
    assert!(text.contains("|D| = 0.250000000000"));

    let marked = scenario("marked_two_slit.json");
    assert_eq!(cqt(&["check", marked.to_str().unwrap()]).status.code(), Some(0));

    // a loose tolerance accepts the interference terms
    let out = cqt(&["check", two.to_str().unwrap(), "--tol", "0.3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn weak_only_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spin.json");
    let s = r#"{"dim": 2, "state": {"pure": [1, 1]}, "steps": [
        {"t": 1, "space": {"members": [{"basis": [[1, 0]]}, {"basis": [[0, 1]]}]}},
        {"t": 2, "space": {"members": [{"basis": [[1, [0, 1]]]}, {"basis": [[1, [0, -1]]]}]}}]}"#;
    std::fs::write(&path, s).unwrap();
    let out = cqt(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    let out = cqt(&["prob", path.to_str().unwrap(), "--history", "1+2,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("family is not a framework"));
}

#[test]
fn json_report_schema() {
    let two = scenario("two_slit.json");
    let out = cqt(&["check", two.to_str().unwrap(), "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["version"], "1");
    assert_eq!(v["verdict"], "Inconsistent");
    assert_eq!(v["scenario_hash"].as_str().unwrap().len(), 64);
    assert!((v["D_offdiag_max"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(v["probabilities"].as_array().unwrap().len(), 4);
    assert_eq!(v["worst_pair"]["first"], "(1,1)");
    let queries = v["queries"].as_array().unwrap();
    assert_eq!(queries.len(), 5);
    assert!(queries[2]["error"].as_str().unwrap().contains("family is not a framework"));
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys[0], "version");
}

#[test]
fn prob_command() {
    let two = scenario("two_slit.json");
    let out = cqt(&["prob", two.to_str().unwrap(), "--history", "1,1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "0.250000000000\n");

    let out = cqt(&["prob", two.to_str().unwrap(), "--history", "1+2,1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("family is not a framework"));
    let out = cqt(&["prob", two.to_str().unwrap(), "--history", "1,1", "--history", "2,1"]);
    assert_eq!(out.status.code(), Some(3));

    let single = scenario("single_time.json");
    let out = cqt(&["prob", single.to_str().unwrap(), "--history", "1"]);
    assert_eq!(stdout(&out), "1.000000000000\n");

    let marked = scenario("marked_two_slit.json");
    let out = cqt(&["prob", marked.to_str().unwrap(), "--history", "1+2,1"]);
    assert_eq!(stdout(&out), "0.500000000000\n");

    for bad in ["3,1", "1", "0,1", "x"] {
        let out = cqt(&["prob", two.to_str().unwrap(), "--history", bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
    }
}

#[test]
fn static_command() {
    let two = scenario("two_slit.json");
    let out = cqt(&["static", two.to_str().unwrap(), "--event", "1", "--step", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "step 2 event {1}: 1.000000000000  truth T\n");
    let out = cqt(&["static", two.to_str().unwrap(), "--event", "2"]);
    assert_eq!(stdout(&out), "step 1 event {2}: 0.500000000000  truth indeterminate\n");
    let out = cqt(&["static", two.to_str().unwrap(), "--event", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cqt(&["static", two.to_str().unwrap(), "--event", "1", "--step", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_input_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"dim": 2, "state": {"pure": [1, 0]}, "hamiltonian": [[1, 0], [0]],
            "steps": [{"t": 1, "space": {"members": [{"basis": [[1, 0]]}, {"basis": [[0, 1]]}]}}]}"#,
    )
    .unwrap();
    let out = cqt(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: hamiltonian[1]:"), "{}", stderr(&out));

    std::fs::write(&path, "{\"dim\": 2,\n \"state\": {\"pure\": [1, \"a\"]}}").unwrap();
    let out = cqt(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("state.pure[1]") && err.contains("line 2"), "{err}");

    let out = cqt(&["check", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(cqt(&["demo", "unknown"]).status.code(), Some(1));
    assert_eq!(cqt(&["check"]).status.code(), Some(1));
}

#[test]
fn bundled_scenarios_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["two_slit.json", "marked_two_slit.json", "single_time.json"] {
        let original = Scenario::load(&scenario(name)).unwrap();
        let copy = dir.path().join(name);
        std::fs::write(&copy, original.to_json_string()).unwrap();
        let reloaded = Scenario::load(&copy).unwrap();
        assert_eq!(original.hash(), reloaded.hash());
        for format in ["table", "json"] {
            let a = cqt(&["check", scenario(name).to_str().unwrap(), "--format", format]);
            let b = cqt(&["check", copy.to_str().unwrap(), "--format", format]);
            assert_eq!(a.stdout, b.stdout, "{name} {format}");
            assert_eq!(a.status.code(), b.status.code());
        }
    }
}

#[test]
fn demos() {
    let out = cqt(&["demo", "mermin"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("0 satisfying assignments of 512\n"));
    for name in ["two-slit", "cz", "diosi"] {
        let out = cqt(&["demo", name, "--seed", "42"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stdout(&out));
        assert!(!stdout(&out).contains("FAIL"));
    }
    let out = cqt(&["demo", "cz", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}
