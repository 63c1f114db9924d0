//! Whole-task runs on the simulated phone, driven by the oracle model.

mod common;

use fsm_agent::agents::{AgentSettings, RecoverySource, RunStatus};
use fsm_agent::bench::{run_task, Suite, TaskRun};
use fsm_agent::gateway::Gateway;
use fsm_agent::simenv::{FaultKind, FaultPolicy};

fn golden() -> Suite {
    Suite::load(&common::golden_dir()).unwrap()
}

fn run(suite: &Suite, task_id: &str, policy: FaultPolicy) -> (TaskRun, Gateway) {
    let task = suite.tasks.iter().find(|t| t.task_id == task_id).unwrap();
    let gateway = Gateway::new(suite.oracle.clone());
    let run = run_task(task, &suite.world, policy, &gateway, &AgentSettings::default(), None).unwrap();
    (run, gateway)
}

/// First seed in 0..200 whose run injects exactly one fault of `kind`.
fn single_fault_run(suite: &Suite, task_id: &str, policy: FaultPolicy, kind: FaultKind) -> (TaskRun, Gateway) {
    (0..200)
        .map(|seed| run(suite, task_id, FaultPolicy { seed, ..policy }))
        .find(|(r, _)| r.faults.len() == 1 && r.faults[0].kind == kind)
        .expect("some seed injects exactly one fault")
}

#[test]
fn four_subtasks_in_one_app() {
    let suite = golden();
    let (run, gateway) = run(&suite, "Notes_Create_1", FaultPolicy::none());
    let summary = &run.outcome.trace.summary;
    assert_eq!(summary.status, RunStatus::Success);
    assert_eq!(summary.plans[0].len(), 4);
    assert_eq!(summary.completed_subtasks.len(), 4);
    assert_eq!(summary.steps, 4);
    assert!(summary.recovery_rounds.is_empty());
    assert!(run.record.success);
    assert_eq!((run.record.actions_matched, run.record.actions_reference), (4, 4));

    let notes = &run.outcome.fsms["Notes"];
    notes.validate().unwrap();
    assert!(notes.states().all(|s| s.verified));
    assert_eq!(run.outcome.journal.entries.len(), 4);
    let tags: Vec<String> = gateway.transcript().into_iter().map(|t| t.tag).collect();
    assert_eq!(tags.iter().filter(|t| *t == "actor").count(), 4);
    assert_eq!(tags.iter().filter(|t| *t == "mentor").count(), 1);
}

#[test]
fn a_swallowed_tap_costs_one_recovery_round() {
    let suite = golden();
    let policy = FaultPolicy { seed: 0, p_noop: 0.3, p_misroute: 0.0 };
    let (run, _) = single_fault_run(&suite, "Notes_Create_1", policy, FaultKind::Noop);
    let summary = &run.outcome.trace.summary;
    assert_eq!(summary.status, RunStatus::Success);
    assert_eq!(summary.recovery_rounds.len(), 1);
    assert_eq!(summary.recovery_rounds[0].source, RecoverySource::Retry);
    assert_eq!((summary.failed_subtasks, summary.recovered_subtasks), (1, 1));
    assert_eq!(summary.replans, 0);
    assert_eq!(summary.steps, 5);
}

#[test]
fn a_misroute_is_walked_back_with_a_model_plan() {
    let suite = golden();
    let policy = FaultPolicy { seed: 0, p_noop: 0.0, p_misroute: 0.5 };
    let (run, gateway) = single_fault_run(&suite, "Shopping_Search_1", policy, FaultKind::Misroute);
    let summary = &run.outcome.trace.summary;
    assert_eq!(summary.status, RunStatus::Success, "{:?}", summary.detail);
    let round = &summary.recovery_rounds[0];
    assert_eq!(round.source, RecoverySource::Model);
    assert_eq!(round.target_beacon, "Homepage of Walmart");
    assert!(round.target_verified);
    assert_eq!((summary.failed_subtasks, summary.recovered_subtasks), (1, 1));
    assert_eq!(gateway.transcript().iter().filter(|t| t.tag == "recovery").count(), 1);
    // the wrong screen ends up in the FSM too, unverified
    let walmart = &run.outcome.fsms["Walmart"];
    assert!(walmart.states().any(|s| s.beacon == "Cart Page of Walmart" && !s.verified));
}

#[test]
fn a_broken_button_leads_to_exactly_one_revised_plan() {
    let suite = Suite::load(&common::local_fixture("double_failure")).unwrap();
    let (run, gateway) = run(&suite, "Shop_Checkout_1", FaultPolicy::none());
    let summary = &run.outcome.trace.summary;
    assert_eq!(summary.status, RunStatus::Success);
    assert_eq!(summary.replans, 1);
    assert_eq!(summary.plans.len(), 2);
    assert_eq!(summary.recovery_rounds.len(), 2);
    assert_eq!((summary.failed_subtasks, summary.recovered_subtasks), (2, 0));
    assert_eq!(gateway.transcript().iter().filter(|t| t.tag == "replanner.judge").count(), 1);
    assert!(run.record.success);
}

#[test]
fn a_tiny_budget_ends_the_run() {
    let suite = golden();
    let task = suite.tasks.iter().find(|t| t.task_id == "Shopping_Order_1").unwrap();
    let gateway = Gateway::new(suite.oracle.clone());
    let settings = AgentSettings { step_budget: 3, ..AgentSettings::default() };
    let run = run_task(task, &suite.world, FaultPolicy::none(), &gateway, &settings, None).unwrap();
    assert_eq!(run.outcome.trace.summary.status, RunStatus::BudgetExhausted);
    assert_eq!(run.outcome.trace.summary.steps, 3);
    assert!(!run.record.success && !run.record.terminated);
}
