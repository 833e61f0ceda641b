use std::process::{Command, Output};

use teastore_core::variability::{canonical_level, Configuration, Level};

fn teastore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teastore")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn enumerate_prints_thirty_distinct_valid_configurations() {
    let o = teastore(&["enumerate"]);
    assert!(o.status.success());
    let configs: std::collections::BTreeSet<Configuration> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(configs.len(), 30);
    assert!(configs.iter().all(Configuration::is_valid));
}

#[test]
fn validate_exit_status_follows_validity() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(&dir, "ok.json", &serde_json::to_string(&canonical_level(Level::L2Full)).unwrap());
    let o = teastore(&["validate", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(r#""valid":true"#));

    let bad = write(&dir, "bad.json", r#"{"image":"local_static","persistence":"local_static","auth":"standard","recommender":"full"}"#);
    let o = teastore(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("C1"));

    let junk = write(&dir, "junk.json", r#"{"image":"sepia"}"#);
    assert_eq!(teastore(&["validate", &junk]).status.code(), Some(2));
    assert_eq!(teastore(&["validate", "/no/such/file"]).status.code(), Some(2));
}

#[test]
fn complete_fills_in_dependencies() {
    let dir = tempfile::tempdir().unwrap();
    let req = write(&dir, "req.json", r#"{"recommender":"full"}"#);
    let cur = write(&dir, "cur.json", &serde_json::to_string(&canonical_level(Level::L0Barebone)).unwrap());
    let o = teastore(&["complete", &req, &cur]);
    assert!(o.status.success());
    let target: Configuration = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(serde_json::to_value(target).unwrap()["persistence"], "external");
    assert_eq!(serde_json::to_value(target).unwrap()["auth"], "standard");

    let impossible = write(&dir, "imp.json", r#"{"auth":"standard","persistence":"local_static"}"#);
    assert_eq!(teastore(&["complete", &impossible, &cur]).status.code(), Some(1));
}

#[test]
fn scenario_list_names_every_builtin() {
    let o = teastore(&["scenario", "list"]);
    let names: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_owned()).collect();
    assert_eq!(names, teastore_core::scenarios::builtin_names());
}

#[test]
fn scenario_run_writes_the_report_and_exits_zero_on_pass() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let o = teastore(&["scenario", "run", "db_unavailable", "--seed", "42", "--report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["seed"], 42);
    assert_eq!(report["log_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn failing_scenario_file_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(
        &dir,
        "s.json",
        r#"{"name":"quiet","initial_config":"L0","phases":[],"injections":[],
            "assertions":[{"check":"breaker_opened","endpoint":"auth"}],"duration_ms":3000}"#,
    );
    let o = teastore(&["scenario", "run", &script]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL breaker_opened"));
    assert_eq!(teastore(&["scenario", "run", "no_such_scenario"]).status.code(), Some(2));
}

#[test]
fn serve_refuses_an_invalid_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir, "bad.json", r#"{"image":"local_static","persistence":"local_static","auth":"absent","recommender":"full"}"#);
    let o = teastore(&["serve", "--config", &bad, "--port", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("C2"));
}
