//! The `fsm-agent` binary end to end: exit codes, outputs and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden() -> PathBuf {
    repo().join("fixtures/golden")
}

fn fsm_agent(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fsm-agent"));
    // keep the caller's MAPLE_* settings out of the tests
    for (key, _) in std::env::vars() {
        if key.starts_with("MAPLE_") {
            cmd.env_remove(key);
        }
    }
    cmd.args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn replayed_run_succeeds_and_writes_a_run_directory() {
    let out = tempfile::tempdir().unwrap();
    let task = golden().join("tasks/Multi_Apps_Address_1.json");
    let o = fsm_agent(&[
        "run", "--task", p(&task), "--world", p(&golden().join("world.json")),
        "--model", "replay", "--replay", p(&golden().join("archive")), "--out", p(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "Multi_Apps_Address_1: success");
    for file in ["trace.jsonl", "summary.json", "journal.json", "faults.json", "metrics.json", "config.json", "transcript.jsonl"] {
        assert!(out.path().join(file).is_file(), "{file} missing");
    }
    assert!(out.path().join("fsm/Maps.dot").is_file());
    assert!(out.path().join("fsm/Notes.json").is_file());
}

#[test]
fn sim_run_without_a_world_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = fsm_agent(&["run", "--task", p(&golden().join("tasks/Notes_Create_1.json")), "--out", p(out.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--world"));
}

#[test]
fn bad_flag_values_are_config_errors() {
    let o = fsm_agent(&["run", "--task", "x.json", "--p-noop", "2.0"]);
    assert_eq!(code(&o), 1);
    let o = fsm_agent(&["run", "--task", "x.json", "--model", "live:nobody"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn exhausted_budget_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let o = fsm_agent(&[
        "run", "--task", p(&golden().join("tasks/Shopping_Order_1.json")),
        "--world", p(&golden().join("world.json")), "--budget", "1", "--out", p(out.path()),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("budget_exhausted"));
}

#[test]
fn replay_miss_terminates_with_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let o = fsm_agent(&[
        "run", "--task", p(&golden().join("tasks/Notes_Create_1.json")),
        "--world", p(&golden().join("world.json")),
        "--model", "replay", "--replay", p(empty.path()), "--out", p(out.path()),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"terminated\""));
}

fn bench(out: &Path) -> Output {
    fsm_agent(&[
        "bench", "--suite", p(&golden()), "--model", "replay", "--replay", p(&golden().join("archive")),
        "--out", p(out),
    ])
}

#[test]
fn replayed_bench_is_perfect_and_repeatable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = bench(a.path());
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let all = stdout(&first).lines().find(|l| l.starts_with("ALL")).unwrap().to_string();
    assert!(all.contains("6/6 (100.00)"), "{all}");
    let second = bench(b.path());
    assert_eq!(stdout(&first), stdout(&second));
    for file in ["metrics.json", "metrics.csv", "Shopping_Order_1/trace.jsonl", "Navigation_Copy_1/fsm/Maps.json"] {
        let read = |d: &Path| std::fs::read(d.join(file)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{file} differs");
    }
    // and matches the committed expectation
    let expected = std::fs::read(golden().join("expected/metrics.json")).unwrap();
    assert_eq!(std::fs::read(a.path().join("metrics.json")).unwrap(), expected);
}

#[test]
fn empty_suite_is_a_config_error() {
    let suite = tempfile::tempdir().unwrap();
    std::fs::copy(golden().join("world.json"), suite.path().join("world.json")).unwrap();
    std::fs::create_dir(suite.path().join("tasks")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = fsm_agent(&["bench", "--suite", p(suite.path()), "--out", p(out.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no task documents"));
}

#[test]
fn export_prints_the_app_graph() {
    let trace = golden().join("expected/Shopping_Order_1");
    let o = fsm_agent(&["export", "--trace", p(&trace), "--app", "Walmart"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph \"Walmart\""));
    assert_eq!(dot.lines().filter(|l| l.contains("shape=") && !l.contains("->")).count(), 4);

    let o = fsm_agent(&["export", "--trace", p(&trace), "--app", "Walmart", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["states"].as_array().unwrap().len(), 4);

    let o = fsm_agent(&["export", "--trace", p(&trace), "--app", "Maps"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn kb_list_show_and_clear() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("kb.json");
    let o = fsm_agent(&["kb", "--store", p(&store), "list"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "0 cues, 0 sequences, 0 fsms");

    // a run fills the store
    let out = tempfile::tempdir().unwrap();
    let o = fsm_agent(&[
        "run", "--task", p(&golden().join("tasks/Notes_Create_1.json")),
        "--world", p(&golden().join("world.json")), "--kb", p(&store), "--out", p(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let listed = stdout(&fsm_agent(&["kb", "--store", p(&store), "list"]));
    assert!(!listed.trim().ends_with(" 0 fsms"), "{listed}");
    let shown: serde_json::Value = serde_json::from_slice(&fsm_agent(&["kb", "--store", p(&store), "show"]).stdout).unwrap();
    assert!(shown["fsms"]["Notes"].is_object());

    assert_eq!(code(&fsm_agent(&["kb", "--store", p(&store), "clear"])), 0);
    assert_eq!(stdout(&fsm_agent(&["kb", "--store", p(&store), "list"])).trim(), "0 cues, 0 sequences, 0 fsms");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("world = {:?}\nbudget = 1\nout = {:?}\n", p(&golden().join("world.json")), p(&out)),
    )
    .unwrap();
    let o = fsm_agent(&["--config", p(&config), "run", "--task", p(&golden().join("tasks/Notes_Create_1.json"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["budget"], 1);
    assert_eq!(written["model"], "oracle");
}

#[test]
fn score_combines_grades_with_recorded_traces() {
    let dir = tempfile::tempdir().unwrap();
    let grades = dir.path().join("grades.json");
    let tasks = ["Multi_Apps_Address_1", "Multi_Apps_Compare_1", "Navigation_Copy_1", "Notes_Create_1", "Shopping_Order_1", "Shopping_Search_1"];
    let entries: Vec<String> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| format!(r#"{{"task_id": "{t}", "rubrics_fulfilled": {}, "rubrics_total": 2, "success": {}}}"#, i % 3, i % 3 == 2))
        .collect();
    std::fs::write(&grades, format!(r#"{{"version": 1, "grades": [{}]}}"#, entries.join(","))).unwrap();
    let out = dir.path().join("report");
    let o = fsm_agent(&[
        "score", "--suite", p(&golden()), "--runs", p(&golden().join("expected")), "--grades", p(&grades), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let all = &report["aggregate"];
    assert_eq!((all["ss"]["numerator"].as_u64(), all["ss"]["denominator"].as_u64()), (Some(6), Some(12)));
    assert_eq!(all["sr"]["numerator"], 2);
    assert_eq!(all["aa"]["percent"], 100.0);

    // a run without a grade is an error
    std::fs::write(&grades, r#"{"version": 1, "grades": []}"#).unwrap();
    let o = fsm_agent(&["score", "--suite", p(&golden()), "--runs", p(&golden().join("expected")), "--grades", p(&grades)]);
    assert_eq!(code(&o), 1);
}
