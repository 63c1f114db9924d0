//! Agent operations against canned model replies.

use std::collections::BTreeMap;

use fsm_agent::agents::{
    AgentError, AgentSettings, Agents, Decision, KnowledgeBase, KnowledgeStore, Plan, PlanItem, PlanSource,
    RecoverySource, TaskContext, VerifyInput,
};
use fsm_agent::condition::{Condition, Predicate, WorldFacts};
use fsm_agent::device::AtomicAction;
use fsm_agent::fsm::{find_recovery_target, AppFsm, JournalEntry, TaskJournal, UiState, SYSTEM_APP};
use fsm_agent::gateway::{CannedBackend, Gateway};
use fsm_agent::perception::{Bounds, ElementKind, PerceptionResult, PerceptionSource, ScreenElement};
use fsm_agent::verdict::{Outcome, Verdict};

fn ctx() -> TaskContext {
    TaskContext::new("Buy a USB-C cable on Walmart", &["Walmart".to_string()], None, &KnowledgeBase::default())
}

fn el(content: &str, l: u32, t: u32, r: u32, b: u32) -> ScreenElement {
    ScreenElement::new(ElementKind::Text, content, Bounds::new(l, t, r, b).unwrap())
}

fn screen(elements: Vec<ScreenElement>) -> PerceptionResult {
    PerceptionResult::new(elements, (1080, 2400), PerceptionSource::Mock, b"png")
}

fn product_page() -> PerceptionResult {
    screen(vec![el("USB-C Cable 2m", 40, 300, 1040, 380), el("Add to cart", 600, 2000, 1000, 2100)])
}

fn plan_reply(items: &[&str]) -> String {
    let lines: Vec<String> = items.iter().enumerate().map(|(i, s)| format!("{}. {s} | Rationale: r{i}", i + 1)).collect();
    format!("### Thought ###\nt\n\n### Plan ###\n{}\n", lines.join("\n"))
}

fn plan_of(items: &[&str]) -> Plan {
    Plan {
        items: items.iter().map(|s| PlanItem { subtask: s.to_string(), rationale: String::new() }).collect(),
        source: PlanSource::Fresh,
    }
}

#[test]
fn plan_takes_the_judged_candidate() {
    let canned = CannedBackend::new();
    for k in 0..5 {
        canned.push(&format!("planner.candidate.{k}"), plan_reply(&[&format!("Open Walmart {k}"), "Search"]));
    }
    canned.push("planner.judge", "### Judgment ###\nbest: 2\nit is the most direct");
    let gateway = Gateway::new(canned);
    let agents = Agents::new(&gateway, AgentSettings::default());
    let plan = agents.plan(&ctx()).unwrap();
    assert_eq!(plan.subtasks(), vec!["Open Walmart 2", "Search"]);
    let tags: Vec<String> = gateway.transcript().into_iter().map(|t| t.tag).collect();
    assert_eq!(tags.iter().filter(|t| t.starts_with("planner.candidate.")).count(), 5);
    assert_eq!(tags.iter().filter(|t| *t == "planner.judge").count(), 1);
}

#[test]
fn judge_reads_the_index_and_rejects_unknown_ones() {
    let plans: Vec<Plan> = (0..5).map(|k| plan_of(&[&format!("step {k}")])).collect();

    let gateway = Gateway::new(CannedBackend::new().with("planner.judge", "### Judgment ###\nbest: 4"));
    let agents = Agents::new(&gateway, AgentSettings::default());
    assert_eq!(agents.judge(&ctx(), &plans).unwrap(), 4);

    // a single plan needs no call at all
    let gateway = Gateway::new(CannedBackend::new());
    let agents = Agents::new(&gateway, AgentSettings::default());
    assert_eq!(agents.judge(&ctx(), &plans[..1]).unwrap(), 0);
    assert!(gateway.transcript().is_empty());

    // out of range twice (the reply is re-asked once)
    let gateway = Gateway::new(CannedBackend::new().with("planner.judge", "### Judgment ###\nbest: 9"));
    let agents = Agents::new(&gateway, AgentSettings::default());
    assert!(matches!(agents.judge(&ctx(), &plans), Err(AgentError::UnparsableJudgment(_))));
    assert_eq!(gateway.transcript().len(), 2);
}

#[test]
fn empty_instruction_is_rejected() {
    let gateway = Gateway::new(CannedBackend::new());
    let agents = Agents::new(&gateway, AgentSettings::default());
    let ctx = TaskContext::new("   ", &[], None, &KnowledgeBase::default());
    assert_eq!(agents.plan(&ctx), Err(AgentError::EmptyInstruction));
}

fn state_reply(app: &str, beacon: &str) -> String {
    format!(
        "### State Description ###\nA product page listing one cable.\n\n\
         ### Predicted Next State ###\nThe cart.\n\n\
         ### App Inference ###\n{app}\n\n\
         ### State Beacon ###\n{beacon}\n\n\
         ### Post-condition of Current State ###\nThe cable is visible.\n\n\
         ### Pre-condition of Next State ###\nThe cable was added to the cart.\n"
    )
}

#[test]
fn describe_state_parses_all_sections() {
    let gateway = Gateway::new(CannedBackend::new().with("state", state_reply("Walmart", "Product Page of Walmart")));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let plan = plan_of(&["Add the cable to the cart"]);
    let reading = agents
        .describe_state(&ctx(), &plan, "Add the cable to the cart", &product_page(), b"png", &[], &[], 3)
        .unwrap();
    assert_eq!(reading.state.app, "Walmart");
    assert_eq!(reading.state.beacon, "Product Page of Walmart");
    assert_eq!(reading.state.description, "A product page listing one cable.");
    assert_eq!(reading.state.predicted_next, "The cart.");
    assert_eq!(reading.state.postcondition.text, "The cable is visible.");
    assert_eq!(reading.pre_next.text, "The cable was added to the cart.");
    assert_eq!(reading.state.first_seen_step, 3);
}

#[test]
fn system_operation_maps_to_the_system_app() {
    let gateway = Gateway::new(CannedBackend::new().with("state", state_reply("System Operation", "Home Screen")));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let reading = agents
        .describe_state(&ctx(), &plan_of(&["Open Walmart"]), "Open Walmart", &product_page(), b"", &[], &[], 0)
        .unwrap();
    assert_eq!(reading.state.app, SYSTEM_APP);
}

#[test]
fn state_reply_missing_a_section_is_an_error() {
    let broken = state_reply("Walmart", "Product Page").replace("### State Beacon ###", "### Beacon ###");
    let gateway = Gateway::new(CannedBackend::new().with("state", broken));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let err = agents
        .describe_state(&ctx(), &plan_of(&["x"]), "x", &product_page(), b"", &[], &[], 0)
        .unwrap_err();
    assert!(matches!(err, AgentError::Malformed(_)), "{err:?}");
}

fn decide(reply: &str) -> Result<Decision, AgentError> {
    let gateway = Gateway::new(CannedBackend::new().with("actor", reply));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let state = UiState::new("Walmart", "Product Page", 1).unwrap();
    agents.decide_action(&ctx(), "Add the cable to the cart", &product_page(), b"", &state, &[])
}

#[test]
fn actor_resolves_element_taps_to_centers() {
    assert_eq!(
        decide("### Action ###\nTap('Add to cart')").unwrap(),
        Decision::Act { action: AtomicAction::Tap { x: 800, y: 2050 }, label: Some("Add to cart".into()) }
    );
    assert_eq!(
        decide("### Action ###\nOpen_App('Maps')").unwrap(),
        Decision::Act { action: AtomicAction::OpenApp { name: "Maps".into() }, label: None }
    );
    assert_eq!(decide("### Action ###\nTap('Checkout')"), Err(AgentError::ElementNotFound("Checkout".into())));
    // Finish() only exists without the planner
    assert!(matches!(decide("### Action ###\nFinish()"), Err(AgentError::NoActionParsed(_))));
}

fn verify_with(gateway: &Gateway, settings: AgentSettings, after: &PerceptionResult, facts: Option<&WorldFacts>) -> Verdict {
    let agents = Agents::new(gateway, settings);
    let mut prev = UiState::new("Walmart", "Product Page", 1).unwrap();
    prev.postcondition = Condition::with_predicate(
        "The cable is in the cart",
        Predicate::VarEq { var: "cart".into(), value: serde_json::json!(1) },
    );
    let before = product_page();
    let input = VerifyInput {
        subtask: "Add the cable to the cart",
        prev: &prev,
        pre_next: &Condition::default(),
        action: &AtomicAction::Tap { x: 800, y: 2050 },
        before: &before,
        after,
        shots: (b"a", b"b"),
        history: &[],
        facts,
    };
    agents.verify(&ctx(), input).unwrap()
}

#[test]
fn verify_parses_each_verdict() {
    for (reply, outcome, reason) in [
        ("### Verdict ###\nSuccess\n### Reason ###\nAdded.", Outcome::Success, ""),
        ("### Verdict ###\nFail\n### Reason ###\nwrong screen", Outcome::Fail, "wrong screen"),
        ("### Verdict ###\nNo Change\n### Reason ###\nnothing happened", Outcome::NoChange, "nothing happened"),
    ] {
        let gateway = Gateway::new(CannedBackend::new().with("verify", reply));
        let v = verify_with(&gateway, AgentSettings::default(), &product_page(), None);
        assert_eq!((v.outcome(), v.reason()), (outcome, reason));
    }
}

#[test]
fn unmet_predicates_short_circuit_the_model() {
    let facts = WorldFacts { vars: BTreeMap::from([("cart".into(), serde_json::json!(0))]), ..Default::default() };
    let gateway = Gateway::new(CannedBackend::new());
    let settings = AgentSettings { mechanical_checks: true, ..AgentSettings::default() };

    let v = verify_with(&gateway, settings.clone(), &product_page(), Some(&facts));
    assert_eq!(v.outcome(), Outcome::NoChange);
    let changed = screen(vec![el("Search", 0, 0, 500, 100)]);
    let v = verify_with(&gateway, settings, &changed, Some(&facts));
    assert_eq!(v.outcome(), Outcome::Fail);
    assert!(gateway.transcript().is_empty());
}

/// A small Maps graph: Home -> Search Results -> Place Details, all verified.
fn maps_fsm() -> (AppFsm, TaskJournal, Vec<UiState>) {
    let mut fsm = AppFsm::new("Maps");
    let mut states = Vec::new();
    for (i, beacon) in ["Home Page of Maps", "Search Results of Maps", "Place Details of Maps"].iter().enumerate() {
        let mut s = UiState::new("Maps", beacon, i).unwrap();
        s.description = format!("{beacon}.");
        let id = fsm.upsert_state(s.clone()).unwrap();
        fsm.mark_verified(&id, &Verdict::success()).unwrap();
        states.push(s);
    }
    for (i, pair) in states.windows(2).enumerate() {
        let action = AtomicAction::Tap { x: 100, y: 200 + i as i32 };
        fsm.record_transition(&pair[0].id, action, &pair[1].id, Condition::default(), Condition::default(), i + 1)
            .unwrap();
    }
    let mut journal = TaskJournal::new();
    journal
        .append(JournalEntry {
            step: 1,
            app: "Maps".into(),
            state: states[1].id.clone(),
            action: AtomicAction::Wait,
            verdict: Verdict::success(),
            verified: true,
        })
        .unwrap();
    (fsm, journal, states)
}

const WORKED_RECOVERY: &str = r#"Here is the plan.
{
  "thought": "The search results page still lists the store; go back there and retry.",
  "plan": [
    "Ensure the Maps app is active and in the foreground.",
    "Navigate back to the search results page if not already visible."
  ],
  "current_subtask": "Ensure the Maps app is active and in the foreground.",
  "goal": "Be on the search results page."
}"#;

#[test]
fn recovery_plan_from_the_model() {
    let (fsm, journal, states) = maps_fsm();
    let failed_at = &states[2];
    let target = find_recovery_target(&fsm, &journal, &failed_at.id).unwrap();
    assert_eq!(target.target, states[2].id, "the failed state itself is the most recent verified one");

    // a target away from the current screen goes to the model
    let current = UiState::new("Maps", "Unknown Popup", 9).unwrap();
    let target = fsm_agent::fsm::RecoveryTarget { target: states[1].id.clone(), path: target.path };
    let gateway = Gateway::new(CannedBackend::new().with("recovery", WORKED_RECOVERY));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let plan = agents.build_recovery_plan(&ctx(), &fsm, &target, &current, "Copy the address", "wrong tap").unwrap();
    assert_eq!(plan.source, RecoverySource::Model);
    assert_eq!(plan.steps.len(), 2);
    assert_eq!(plan.current_subtask, "Ensure the Maps app is active and in the foreground.");
    assert_eq!(plan.goal, "Be on the search results page.");
    assert_eq!(plan.target, states[1].id);
}

#[test]
fn recovery_at_the_target_is_a_retry_without_a_call() {
    let (fsm, journal, states) = maps_fsm();
    let target = find_recovery_target(&fsm, &journal, &states[2].id).unwrap();
    let gateway = Gateway::new(CannedBackend::new());
    let agents = Agents::new(&gateway, AgentSettings::default());
    let plan = agents.build_recovery_plan(&ctx(), &fsm, &target, &states[2], "Copy the address", "no-op").unwrap();
    assert_eq!(plan.source, RecoverySource::Retry);
    assert_eq!(plan.steps, vec!["Copy the address".to_string()]);
    assert!(gateway.transcript().is_empty());
}

#[test]
fn recovery_reply_without_current_subtask_is_unparsable() {
    let (fsm, _, states) = maps_fsm();
    let target = fsm_agent::fsm::RecoveryTarget { target: states[0].id.clone(), path: vec![] };
    let gateway = Gateway::new(CannedBackend::new().with("recovery", r#"{"thought":"t","plan":["Go home"]}"#));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let err = agents.build_recovery_plan(&ctx(), &fsm, &target, &states[2], "x", "y").unwrap_err();
    assert!(matches!(err, AgentError::UnparsableRecovery(_)), "{err:?}");
}

const MENTOR_REPLY: &str = "### Guidance Cues ###\n\
- Search results in Walmart need a scroll before the first product.\n\
- The cart icon is top right.\n\n\
### Action Sequences ###\n\
- open cart | on any Walmart page | Tap(1000, 120); Wait()\n\
- broken | x | Tap('Cart')\n";

#[test]
fn mentor_keeps_cues_sequences_and_fsms() {
    let (fsm, _, _) = maps_fsm();
    let fsms = BTreeMap::from([("Maps".to_string(), fsm)]);
    let gateway = Gateway::new(CannedBackend::new().with("mentor", MENTOR_REPLY));
    let agents = Agents::new(&gateway, AgentSettings::default());
    let delta = agents.retain(&ctx(), "success", &[], &[], &[], &fsms);
    assert_eq!(delta.guidance_cues.len(), 2);
    assert_eq!(delta.action_sequences.len(), 1, "element-named actions are dropped");
    assert_eq!(delta.action_sequences[0].actions, vec![AtomicAction::Tap { x: 1000, y: 120 }, AtomicAction::Wait]);
    assert_eq!(delta.fsms.len(), 1);

    // merging the same delta twice stores each cue once
    let dir = tempfile::tempdir().unwrap();
    let store = KnowledgeStore::new(dir.path().join("kb.json"));
    store.merge(delta.clone()).unwrap();
    let kb = store.merge(delta).unwrap();
    assert_eq!((kb.guidance_cues.len(), kb.action_sequences.len(), kb.fsms.len()), (2, 1, 1));
    assert_eq!(store.load().unwrap(), kb);
}

#[test]
fn mentor_failure_keeps_only_fsms() {
    let (fsm, _, _) = maps_fsm();
    let fsms = BTreeMap::from([("Maps".to_string(), fsm)]);
    let gateway = Gateway::new(CannedBackend::new());
    let agents = Agents::new(&gateway, AgentSettings::default());
    let delta = agents.retain(&ctx(), "terminated", &[], &[(3, Verdict::fail("x").unwrap())], &[], &fsms);
    assert!(delta.guidance_cues.is_empty() && delta.action_sequences.is_empty());
    assert_eq!(delta.fsms.len(), 1);
}
