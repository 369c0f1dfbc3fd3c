use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn gcrs<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_gcrs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_shipped_scenarios() {
    for entry in std::fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let o = gcrs(["validate".as_ref(), path.as_os_str()]);
            assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        }
    }
}

#[test]
fn validate_reports_every_problem_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{
          "duration_ticks": 10, "global_seed": 0,
          "regions": [{ "id": 1, "utc_offset_minutes": 0 }],
          "networks": [{ "id": 1, "region": 9, "bands": [] }],
          "links": [{ "id": 4, "a": 1, "b": 77, "delta_ticks": 1 }]
        }"#,
    )
    .unwrap();
    let o = gcrs(["validate".as_ref(), bad.as_os_str()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("networks[0].region"), "{err}");
    assert!(err.contains("links[0]"), "{err}");

    std::fs::write(&bad, r#"{ "duration_ticks": 1, "surprise": true }"#).unwrap();
    let o = gcrs(["validate".as_ref(), bad.as_os_str()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("surprise"));

    let o = gcrs(["validate", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gcrs(["frobnicate"]).status.code(), Some(2));
    assert_eq!(gcrs(["run"]).status.code(), Some(2));
    let path = scenario("fifteen_percent.json");
    assert_eq!(
        gcrs(["run".as_ref(), path.as_os_str(), "--format".as_ref(), "xml".as_ref()]).status.code(),
        Some(2)
    );
}

#[test]
fn run_prints_fifteen_percent() {
    let path = scenario("fifteen_percent.json");
    let o = gcrs(["run".as_ref(), path.as_os_str()]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    assert!(row.ends_with("0.150"), "{out}");
}

#[test]
fn metrics_recomputes_what_run_reported() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let metrics = dir.path().join("m.json");
    let scen = scenario("antipodal_rental.json");
    let o = gcrs([
        "run".as_ref(),
        scen.as_os_str(),
        "--out-trace".as_ref(),
        trace.as_os_str(),
        "--out-metrics".as_ref(),
        metrics.as_os_str(),
        "--format".as_ref(),
        "json".as_ref(),
    ]);
    assert!(o.status.success());
    let reported: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(reported, saved);
    let o = gcrs(["metrics".as_ref(), scen.as_os_str(), trace.as_os_str(), "--format".as_ref(), "json".as_ref()]);
    assert!(o.status.success());
    let again: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(again, reported);
    assert_eq!(reported["lease_grants"], 4);
}

#[test]
fn diff_trace_names_the_first_differing_line() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    std::fs::write(&a, "h\nx\ny\n").unwrap();
    std::fs::write(&b, "h\nx\nz\n").unwrap();
    let o = gcrs(["diff-trace".as_ref(), a.as_os_str(), b.as_os_str()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("traces differ at line 3\n< y\n> z"), "{}", stdout(&o));
    let o = gcrs(["diff-trace".as_ref(), a.as_os_str(), a.as_os_str()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "traces identical\n");
}

#[test]
fn seed_flag_lands_in_the_trace_header() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let scen = scenario("seed_sensitivity.json");
    let o = gcrs(["run".as_ref(), scen.as_os_str(), "--seed".as_ref(), "42".as_ref(), "--out-trace".as_ref(), t.as_os_str()]);
    assert!(o.status.success());
    let first = std::fs::read_to_string(&t).unwrap().lines().next().unwrap().to_string();
    assert!(first.contains("\"seed\":42"), "{first}");
}
