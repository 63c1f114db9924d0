//! The execution loop: plan, then per step describe → act → observe →
//! verify → record, with recovery rounds on failed steps and a revised plan
//! once recovery keeps failing.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::knowledge::KnowledgeBase;
use super::ops::{path_fallback, Agents, Decision, StateReading, TaskContext, VerifyInput};
use super::plan::{Plan, RecoveryPlan};
use super::trace::{RecoveryRound, RunStatus, StepMode, StepRecord, Trace, TraceSummary};
use crate::condition::WorldFacts;
use crate::device::{ActorCommand, AtomicAction, Device, DeviceObservation};
use crate::eval::{describe_action, TaskSpec};
use crate::fsm::{
    find_recovery_target, label_key, AppFsm, CrossAppEdge, JournalEntry, RecoveryTarget, StateId, TaskJournal, UiState,
};
use crate::perception::{image_digest, PerceptionResult, Perceiver};
use crate::verdict::{Outcome, Verdict};

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub fsms: BTreeMap<String, AppFsm>,
    pub journal: TaskJournal,
    /// Every non-Success verdict with its step.
    pub errors: Vec<(usize, Verdict)>,
    /// Knowledge the Mentor extracted; `None` when the Mentor is off.
    pub knowledge_delta: Option<KnowledgeBase>,
    /// World state at the end (simulated devices only).
    pub final_facts: Option<WorldFacts>,
}

/// Runs one task to a terminal status. Failures of any component end the
/// run with a status; they never panic or propagate.
pub fn orchestrate(
    task: &TaskSpec,
    knowledge: &KnowledgeBase,
    agents: &Agents<'_>,
    device: &mut dyn Device,
    perceiver: &dyn Perceiver,
) -> RunOutcome {
    let ctx = TaskContext::new(&task.instruction, &task.apps, task.judge_rubric.as_deref(), knowledge);
    let mut run = Run {
        agents,
        device,
        perceiver,
        ctx,
        fsms: BTreeMap::new(),
        journal: TaskJournal::new(),
        records: Vec::new(),
        errors: Vec::new(),
        history: Vec::new(),
        beacons: Vec::new(),
        plans: Vec::new(),
        plan: Plan::instruction_only(&task.instruction),
        idx: 0,
        completed: Vec::new(),
        mode: Mode::Main,
        recovery_failures: 0,
        replans: 0,
        rounds: Vec::new(),
        pending: Vec::new(),
        failed_subtasks: 0,
        recovered_subtasks: 0,
        screen: None,
        reading: None,
    };
    let (status, detail) = match run.drive() {
        Ok(status) => (status, None),
        Err(detail) => {
            log::warn!("task {} terminated: {detail}", task.task_id);
            (RunStatus::Terminated, Some(detail))
        }
    };
    run.finish(task, status, detail)
}

#[derive(Debug, Clone)]
enum Mode {
    Main,
    Recovery { plan: RecoveryPlan, pos: usize },
}

struct Screen {
    obs: DeviceObservation,
    p: PerceptionResult,
}

struct Run<'r, 'g> {
    agents: &'r Agents<'g>,
    device: &'r mut dyn Device,
    perceiver: &'r dyn Perceiver,
    ctx: TaskContext,
    fsms: BTreeMap<String, AppFsm>,
    journal: TaskJournal,
    records: Vec<StepRecord>,
    errors: Vec<(usize, Verdict)>,
    history: Vec<String>,
    beacons: Vec<String>,
    plans: Vec<Plan>,
    plan: Plan,
    /// Index of the active main subtask.
    idx: usize,
    completed: Vec<String>,
    mode: Mode,
    recovery_failures: usize,
    replans: usize,
    rounds: Vec<RecoveryRound>,
    /// Main subtask index of every failure awaiting recovery.
    pending: Vec<usize>,
    failed_subtasks: usize,
    recovered_subtasks: usize,
    screen: Option<Screen>,
    reading: Option<StateReading>,
}

enum StepEnd {
    Verdict(Verdict),
    Finished,
}

fn literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(tap|type|enter|back|open_app|swipe|switch_app|home|wait)\s*\(.*\)\s*$").unwrap()
    })
}

/// A recovery step that is itself an action literal, e.g. `Back()`.
fn as_literal(step: &str) -> Option<ActorCommand> {
    literal_re().is_match(step).then(|| ActorCommand::parse(step).ok()).flatten()
}

fn same(a: &str, b: &str) -> bool {
    label_key(a) == label_key(b)
}

impl Run<'_, '_> {
    fn settings(&self) -> &super::AgentSettings {
        self.agents.settings()
    }

    fn look(&mut self) -> Result<Screen, String> {
        let obs = self.device.observe().map_err(|e| format!("observe: {e}"))?;
        let p = self.perceiver.perceive(&obs.screenshot).map_err(|e| format!("perceive: {e}"))?;
        Ok(Screen { obs, p })
    }

    fn main_subtask(&self) -> &str {
        &self.plan.items[self.idx].subtask
    }

    fn active_subtask(&self) -> String {
        match &self.mode {
            Mode::Main => self.main_subtask().to_string(),
            Mode::Recovery { plan, pos } => plan.steps[*pos].clone(),
        }
    }

    /// The subtask that becomes active if the current step succeeds.
    fn subtask_after_success(&self) -> Option<String> {
        let main_next = |done: bool| {
            if done && self.settings().planner {
                self.plan.items.get(self.idx + 1).map(|i| i.subtask.clone())
            } else {
                Some(self.main_subtask().to_string())
            }
        };
        match &self.mode {
            Mode::Main => main_next(true),
            Mode::Recovery { plan, pos } => match plan.steps.get(pos + 1) {
                Some(next) => Some(next.clone()),
                None => main_next(same(&plan.steps[*pos], self.main_subtask())),
            },
        }
    }

    fn drive(&mut self) -> Result<RunStatus, String> {
        let screen = self.look()?;
        self.screen = Some(screen);
        if self.settings().planner {
            let plan = self.agents.plan(&self.ctx).map_err(|e| format!("planning: {e}"))?;
            self.plan = plan;
        }
        self.plans.push(self.plan.clone());
        loop {
            if matches!(self.mode, Mode::Main) && self.idx >= self.plan.len() {
                return Ok(RunStatus::Success);
            }
            if self.records.len() >= self.settings().step_budget {
                return Ok(RunStatus::BudgetExhausted);
            }
            let active = self.active_subtask();
            let verdict = match self.step(&active) {
                Ok(StepEnd::Finished) => return Ok(RunStatus::Success),
                Ok(StepEnd::Verdict(v)) => v,
                Err(e) if matches!(self.mode, Mode::Main) => return Err(e),
                Err(e) => {
                    // a broken recovery step counts as a failed one
                    log::warn!("recovery step {active:?} failed: {e}");
                    if let Some(status) = self.recovery_failed(&e)? {
                        return Ok(status);
                    }
                    continue;
                }
            };
            if let Some(status) = self.advance(&active, verdict)? {
                return Ok(status);
            }
        }
    }

    fn describe(&self, subtask: &str, screen: &Screen, step: usize) -> Result<StateReading, String> {
        self.agents
            .describe_state(
                &self.ctx,
                &self.plan,
                subtask,
                &screen.p,
                &screen.obs.screenshot,
                &self.beacons,
                &self.history,
                step,
            )
            .map_err(|e| format!("state description: {e}"))
    }

    /// Files the described screen in its app's FSM.
    fn file_state(&mut self, reading: &mut StateReading) -> Result<(), String> {
        let app = reading.state.app.clone();
        let fsm = self.fsms.entry(app.clone()).or_insert_with(|| AppFsm::new(&app));
        let id = fsm.upsert_state(reading.state.clone()).map_err(|e| e.to_string())?;
        reading.state = fsm.state(&id).cloned().expect("just upserted");
        if !self.beacons.iter().any(|b| same(b, &reading.state.beacon)) {
            self.beacons.push(reading.state.beacon.clone());
        }
        Ok(())
    }

    fn ensure_reading(&mut self, subtask: &str) -> Result<StateReading, String> {
        if let Some(r) = self.reading.as_ref().filter(|r| r.subtask == subtask) {
            return Ok(r.clone());
        }
        let screen = self.screen.as_ref().expect("observed before stepping");
        let mut reading = self.describe(subtask, screen, self.records.len())?;
        self.file_state(&mut reading)?;
        self.reading = Some(reading.clone());
        Ok(reading)
    }

    fn step(&mut self, active: &str) -> Result<StepEnd, String> {
        let before = self.ensure_reading(active)?;
        let screen = self.screen.take().expect("observed before stepping");
        let result = self.act(active, &before, &screen);
        if self.screen.is_none() {
            // the step broke part-way; the device may have moved on
            self.reading = None;
            let fresh = self.look().unwrap_or(screen);
            self.screen = Some(fresh);
        }
        result
    }

    fn act(&mut self, active: &str, before: &StateReading, screen: &Screen) -> Result<StepEnd, String> {
        let n = self.records.len();
        let decision = match (&self.mode, as_literal(active)) {
            (Mode::Recovery { .. }, Some(ActorCommand::Act(action))) => Decision::Act { action, label: None },
            (Mode::Recovery { .. }, Some(ActorCommand::TapElement(label))) => {
                let el = screen.p.locate(&label).ok_or_else(|| format!("element {label:?} is not on the screen"))?;
                Decision::Act {
                    action: AtomicAction::Tap { x: el.center.0 as i32, y: el.center.1 as i32 },
                    label: Some(el.content.clone()),
                }
            }
            _ => self
                .agents
                .decide_action(&self.ctx, active, &screen.p, &screen.obs.screenshot, &before.state, &self.history)
                .map_err(|e| format!("action: {e}"))?,
        };
        let (action, label) = match decision {
            Decision::Finish => return Ok(StepEnd::Finished),
            Decision::Act { action, label } => (action, label),
        };
        self.device.execute(&action).map_err(|e| format!("execute {action}: {e}"))?;
        let after = self.look()?;
        let facts = self.device.facts();
        let verdict = self
            .agents
            .verify(
                &self.ctx,
                VerifyInput {
                    subtask: active,
                    prev: &before.state,
                    pre_next: &before.pre_next,
                    action: &action,
                    before: &screen.p,
                    after: &after.p,
                    shots: (&screen.obs.screenshot, &after.obs.screenshot),
                    history: &self.history,
                    facts: facts.as_ref(),
                },
            )
            .map_err(|e| format!("verification: {e}"))?;
        self.history.push(format!("- step {n} [{}]: {action} -> {:?}", before.state.beacon, verdict.outcome()));

        let next = if verdict.is_success() { self.subtask_after_success() } else { Some(active.to_string()) };
        let next = next.unwrap_or_else(|| active.to_string());
        let mut post = if after.p.digest() == screen.p.digest() && next == before.subtask {
            let mut same_screen = before.clone();
            same_screen.state.last_seen_step = n;
            same_screen
        } else {
            self.describe(&next, &after, n)?
        };
        self.file_state(&mut post)?;

        let (pre, cur) = (&before.state, &post.state);
        if verdict.outcome() != Outcome::NoChange {
            if same(&pre.app, &cur.app) {
                let fsm = self.fsms.get_mut(&cur.app).expect("filed above");
                fsm.record_transition(
                    &pre.id,
                    action.clone(),
                    &cur.id,
                    before.pre_next.clone(),
                    pre.postcondition.clone(),
                    n,
                )
                .map_err(|e| e.to_string())?;
            } else {
                self.journal.record_cross_app(CrossAppEdge {
                    step: n,
                    from_app: pre.app.clone(),
                    from: pre.id.clone(),
                    action: action.clone(),
                    to_app: cur.app.clone(),
                    to: cur.id.clone(),
                });
            }
        }
        let fsm = self.fsms.get_mut(&cur.app).expect("filed above");
        fsm.mark_verified(&cur.id, &verdict).map_err(|e| e.to_string())?;
        post.state = fsm.state(&cur.id).cloned().expect("filed above");
        self.journal
            .append(JournalEntry {
                step: n,
                app: post.state.app.clone(),
                state: post.state.id.clone(),
                action: action.clone(),
                verdict: verdict.clone(),
                verified: post.state.verified,
            })
            .map_err(|e| e.to_string())?;
        self.records.push(StepRecord {
            step: n,
            mode: match self.mode {
                Mode::Main => StepMode::Main,
                Mode::Recovery { .. } => StepMode::Recovery,
            },
            subtask: active.to_string(),
            app_before: before.state.app.clone(),
            state_before: before.state.id.clone(),
            perception_before: screen.p.digest(),
            action_description: describe_action(&action, label.as_deref()),
            action,
            action_label: label,
            app_after: post.state.app.clone(),
            state_after: post.state.id.clone(),
            perception_after: after.p.digest(),
            verdict: verdict.clone(),
            screenshot_before: image_digest(&screen.obs.screenshot),
            screenshot_after: image_digest(&after.obs.screenshot),
            started_ms: screen.obs.timestamp_ms,
            finished_ms: after.obs.timestamp_ms,
        });
        if !verdict.is_success() {
            self.errors.push((n, verdict.clone()));
        }
        self.screen = Some(after);
        self.reading = Some(post);
        Ok(StepEnd::Verdict(verdict))
    }

    fn advance(&mut self, active: &str, verdict: Verdict) -> Result<Option<RunStatus>, String> {
        if verdict.is_success() {
            self.recovery_failures = 0;
            let main = self.main_subtask().to_string();
            if same(active, &main) {
                self.mark_recovered();
            }
            match &mut self.mode {
                Mode::Main => {
                    if self.settings().planner {
                        self.completed.push(main);
                        self.idx += 1;
                    }
                }
                Mode::Recovery { plan, pos } => {
                    if *pos + 1 < plan.steps.len() {
                        *pos += 1;
                    } else {
                        if self.settings().planner && same(active, &main) {
                            self.completed.push(main);
                            self.idx += 1;
                        }
                        self.mode = Mode::Main;
                    }
                }
            }
            return Ok(None);
        }
        match self.mode {
            Mode::Main => self.open_round(verdict.reason()),
            Mode::Recovery { .. } => self.recovery_failed(verdict.reason()),
        }
    }

    fn mark_recovered(&mut self) {
        let idx = self.idx;
        let before = self.pending.len();
        self.pending.retain(|&i| i != idx);
        self.recovered_subtasks += before - self.pending.len();
    }

    fn recovery_failed(&mut self, reason: &str) -> Result<Option<RunStatus>, String> {
        self.recovery_failures += 1;
        if self.recovery_failures >= self.settings().recovery_failures_before_replan {
            return self.replan();
        }
        self.open_round(reason)
    }

    fn recovery_target(&self) -> Option<(RecoveryTarget, String)> {
        let current = &self.reading.as_ref()?.state;
        let search = |app: &str, id: &StateId| {
            self.fsms
                .get(app)
                .and_then(|fsm| find_recovery_target(fsm, &self.journal, id))
                .map(|t| (t, app.to_string()))
        };
        search(&current.app, &current.id).or_else(|| {
            let last = self.records.last()?;
            search(&last.app_before, &last.state_before)
        })
    }

    /// Starts a recovery round for the active main subtask.
    fn open_round(&mut self, reason: &str) -> Result<Option<RunStatus>, String> {
        let failed = self.main_subtask().to_string();
        self.failed_subtasks += 1;
        self.pending.push(self.idx);
        let Some((target, app)) = self.recovery_target() else {
            log::info!("no verified state to return to; revising the plan");
            return self.replan();
        };
        let fsm = &self.fsms[&app];
        let current: UiState = self.reading.as_ref().expect("a state was described").state.clone();
        let plan = match self.agents.build_recovery_plan(&self.ctx, fsm, &target, &current, &failed, reason) {
            Ok(plan) => plan,
            Err(e) => {
                log::warn!("recovery plan unusable ({e}); replaying the recorded path");
                path_fallback(&target, &failed, reason)
            }
        };
        let node = fsm.state(&target.target).expect("targets come from the FSM");
        self.rounds.push(RecoveryRound {
            opened_at: self.records.len().saturating_sub(1),
            failed_subtask: failed,
            reason: reason.to_string(),
            target: target.target.clone(),
            target_beacon: node.beacon.clone(),
            target_verified: node.verified,
            source: plan.source,
            steps: plan.steps.clone(),
        });
        let pos = plan.steps.iter().position(|s| same(s, &plan.current_subtask)).unwrap_or(0);
        self.mode = Mode::Recovery { plan, pos };
        Ok(None)
    }

    fn replan(&mut self) -> Result<Option<RunStatus>, String> {
        if self.replans >= self.settings().max_replans {
            return Err(format!("still failing after {} revised plans", self.replans));
        }
        self.replans += 1;
        self.pending.clear();
        self.recovery_failures = 0;
        self.mode = Mode::Main;
        if self.settings().planner {
            let failures: Vec<String> = self.errors.iter().map(|(n, v)| format!("step {n}: {v}")).collect();
            let screen = self.screen.as_ref().expect("observed");
            let plan = self
                .agents
                .replan(&self.ctx, &self.plan, &self.completed, &failures, &screen.p)
                .map_err(|e| format!("replanning: {e}"))?;
            self.plan = plan;
        } else {
            self.plan = Plan::instruction_only(&self.ctx.instruction);
        }
        self.idx = 0;
        self.plans.push(self.plan.clone());
        Ok(None)
    }

    fn finish(mut self, task: &TaskSpec, status: RunStatus, detail: Option<String>) -> RunOutcome {
        let knowledge_delta = self.settings().mentor.then(|| {
            let mut transitions = Vec::new();
            for fsm in self.fsms.values() {
                let beacon = |id: &StateId| fsm.state(id).map_or_else(|| id.to_string(), |s| s.beacon.clone());
                for t in fsm.transitions() {
                    transitions.push(format!("{}: {} --{}--> {}", fsm.app(), beacon(&t.from), t.action, beacon(&t.to)));
                }
            }
            for e in &self.journal.cross_app_edges {
                transitions.push(format!("{} --{}--> {}", e.from_app, e.action, e.to_app));
            }
            self.agents.retain(&self.ctx, status.as_str(), &self.history, &self.errors, &transitions, &self.fsms)
        });
        let summary = TraceSummary {
            task_id: task.task_id.clone(),
            instruction: task.instruction.clone(),
            status,
            steps: self.records.len(),
            plans: std::mem::take(&mut self.plans),
            replans: self.replans,
            recovery_rounds: std::mem::take(&mut self.rounds),
            failed_subtasks: self.failed_subtasks,
            recovered_subtasks: self.recovered_subtasks,
            completed_subtasks: std::mem::take(&mut self.completed),
            final_beacon: self.reading.as_ref().map(|r| r.state.beacon.clone()).unwrap_or_default(),
            detail,
        };
        RunOutcome {
            trace: Trace { records: std::mem::take(&mut self.records), summary },
            final_facts: self.device.facts(),
            fsms: std::mem::take(&mut self.fsms),
            journal: std::mem::take(&mut self.journal),
            errors: std::mem::take(&mut self.errors),
            knowledge_delta,
        }
    }
}
