//! Task documents, rubric scoring, action accuracy and metric arithmetic.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use fsm_agent::condition::WorldFacts;
use fsm_agent::device::AtomicAction;
use fsm_agent::eval::{action_accuracy, compute_metrics, load_suite, load_task, score_rubrics, EvalError, Ratio, TaskRecord};

#[test]
fn shopping_task_loads_with_its_rubrics_and_apps() {
    let doc = std::fs::read_to_string(common::spa_suite_dir().join("tasks/Web_Shopping_2_ENG.json")).unwrap();
    let task = load_task(&doc).unwrap();
    assert_eq!(task.task_id, "Web_Shopping_2_ENG");
    assert_eq!(task.apps, vec!["Airbnb".to_string(), "Instagram".to_string()]);
    assert_eq!(task.rubrics.len(), 7);
    assert!(task.rubrics.iter().all(|r| r.predicate.is_none()));
    assert_eq!(task.human_reference_operations.len(), 15);
    assert_eq!(task.task_type, "multi_app");
}

#[test]
fn the_twenty_task_suite_has_unique_ids() {
    let tasks = load_suite(&common::spa_suite_dir()).unwrap();
    assert_eq!(tasks.len(), 20);
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 20);
    assert!(ids.contains(&"Social_Sharing_1_EN"));
}

#[test]
fn schema_errors_name_the_field() {
    let missing = r#"{"task_id": "t", "type": "single_app", "apps": ["Maps"]}"#;
    assert_eq!(
        load_task(missing),
        Err(EvalError::SchemaError { field: "instruction".into(), detail: "missing".into() })
    );
    let blank = r#"{"task_id": "t", "instruction": "  ", "type": "single_app", "apps": []}"#;
    assert!(matches!(load_task(blank), Err(EvalError::SchemaError { field, .. }) if field == "instruction"));
    assert!(matches!(load_task("[1, 2]"), Err(EvalError::SchemaError { field, .. }) if field == "document"));
}

#[test]
fn suites_reject_duplicates_and_emptiness() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("tasks")).unwrap();
    assert!(matches!(load_suite(dir.path()), Err(EvalError::EmptySuite(_))));
    let doc = r#"{"task_id": "same", "instruction": "x", "type": "single_app", "apps": []}"#;
    std::fs::write(dir.path().join("tasks/a.json"), doc).unwrap();
    std::fs::write(dir.path().join("tasks/b.json"), doc).unwrap();
    assert_eq!(load_suite(dir.path()), Err(EvalError::DuplicateTask("same".into())));
}

#[test]
fn rubric_predicates_are_scored_on_final_facts() {
    let doc = r#"{
        "task_id": "Notes_1", "instruction": "Save a note", "type": "single_app", "apps": ["Notes"],
        "rubrics": [
            {"text": "Opened Notes", "predicate": {"visited": {"app": "Notes"}}},
            {"text": "Typed the note", "predicate": {"typed": {"text": "milk"}}},
            {"text": "Saved the note", "predicate": {"var_eq": {"var": "note_saved", "value": true}}}
        ],
        "human_reference_operations": ["open Notes app"]
    }"#;
    let task = load_task(doc).unwrap();
    let facts = WorldFacts {
        foreground_app: Some("Notes".into()),
        screen: Some("editor".into()),
        visited: vec![("Notes".into(), "list".into()), ("Notes".into(), "editor".into())],
        typed: vec!["milk".into()],
        vars: BTreeMap::from([("note_saved".into(), serde_json::json!(false))]),
        actions: vec![(AtomicAction::Type { text: "milk".into() }, None)],
        ..Default::default()
    };
    assert_eq!(score_rubrics(&facts, &task.rubrics), Ok((2, 3)));

    let plain = load_task(r#"{"task_id": "t", "instruction": "x", "type": "s", "apps": [], "rubrics": ["just text"]}"#).unwrap();
    assert_eq!(score_rubrics(&facts, &plain.rubrics), Err(EvalError::MissingPredicate(0)));
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn action_accuracy_ignores_wording() {
    let reference = strings(&["open Walmart app", "tap on the search bar", "type 'usb c cable'", "tap enter", "tap 'Add to cart'"]);
    let executed = strings(&["Open_App('Walmart')", "Tap('search bar')", "Type('usb c cable')", "Enter()", "Back()", "Tap('Add to cart')"]);
    assert_eq!(action_accuracy(&executed, &reference), Ok((5, 5)));
    let wrong_order = strings(&["Enter()", "Type('usb c cable')", "Open_App('Walmart')"]);
    assert_eq!(action_accuracy(&wrong_order, &reference), Ok((1, 5)));
    assert_eq!(action_accuracy(&executed, &[]), Err(EvalError::EmptyReference));
}

/// Half-up rounding to hundredths of a percent, by long division.
fn rounded_oracle(num: u64, den: u64) -> u64 {
    let scaled = num * 10_000;
    let (q, r) = (scaled / den, scaled % den);
    if 2 * r >= den { q + 1 } else { q }
}

fn record() -> impl Strategy<Value = TaskRecord> {
    (0u64..10, 0u64..10, 0u64..20, 0u64..20, 0u64..6, 0u64..6, any::<bool>(), any::<bool>()).prop_map(
        |(rf, rt, am, ar, rec, fail, success, terminated)| TaskRecord {
            task_id: "t".into(),
            success: success && !terminated,
            terminated,
            rubrics_fulfilled: rf.min(rt),
            rubrics_total: rt,
            actions_matched: am.min(ar),
            actions_reference: ar,
            failed_subtasks: fail,
            recovered_subtasks: rec.min(fail),
        },
    )
}

proptest! {
    #[test]
    fn percentages_round_half_up(num in 0u64..100_000, den in 1u64..100_000) {
        let num = num.min(den);
        prop_assert_eq!(Ratio::new(num, den).percent_hundredths(), Some(rounded_oracle(num, den)));
    }

    #[test]
    fn aggregates_are_sums_over_tasks(records in prop::collection::vec(record(), 1..12)) {
        let report = compute_metrics(&records);
        prop_assert_eq!(report.tasks.len(), records.len());
        let a = report.aggregate;
        let n = records.len() as u64;
        let sr = a.sr.unwrap();
        prop_assert_eq!((sr.numerator, sr.denominator), (records.iter().filter(|r| r.success).count() as u64, n));
        let tr = a.tr.unwrap();
        prop_assert_eq!(tr.numerator, records.iter().filter(|r| r.terminated).count() as u64);
        let failed: u64 = records.iter().map(|r| r.failed_subtasks).sum();
        prop_assert_eq!(a.rs.is_some(), failed > 0);
        let refs: u64 = records.iter().map(|r| r.actions_reference).sum();
        if let Some(aa) = a.aa {
            prop_assert_eq!(aa.denominator, refs);
            prop_assert!(aa.numerator <= aa.denominator);
            prop_assert!((0.0..=100.0).contains(&aa.percent));
        } else {
            prop_assert_eq!(refs, 0);
        }
    }
}
