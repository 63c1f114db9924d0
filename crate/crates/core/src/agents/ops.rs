use std::sync::OnceLock;

use regex::Regex;

use super::knowledge::{ActionSequence, GuidanceCue, KnowledgeBase};
use super::plan::{Plan, PlanSource, RecoveryPlan, RecoverySource};
use super::prompts::{self, bullets, render, sections as s, SYSTEM_OPERATION};
use super::{AgentError, AgentSettings};
use crate::condition::{Condition, WorldFacts};
use crate::device::{ActorCommand, AtomicAction};
use crate::fsm::{canonical_label, AppFsm, RecoveryTarget, UiState, SYSTEM_APP};
use crate::gateway::{parse_sections, Gateway, Message, ModelRequest, SectionedResponse};
use crate::perception::PerceptionResult;
use crate::verdict::Verdict;

/// Judge rubric used when a task does not bring its own.
pub const DEFAULT_RUBRIC: &str = "Prefer the plan with the best goal relevance (every subtask serves the instruction), \
execution efficiency (fewest screen interactions), robustness (tolerates unexpected screens) and clarity \
(each subtask is unambiguous).";

/// Request tags; replay archives and transcripts are keyed by them.
pub mod tags {
    pub const PLANNER: &str = "planner";
    pub const REPLANNER: &str = "replanner";
    pub const STATE: &str = "state";
    pub const ACTOR: &str = "actor";
    pub const VERIFY: &str = "verify";
    pub const RECOVERY: &str = "recovery";
    pub const MENTOR: &str = "mentor";

    pub fn candidate(prefix: &str, k: usize) -> String {
        format!("{prefix}.candidate.{k}")
    }

    pub fn judge(prefix: &str) -> String {
        format!("{prefix}.judge")
    }
}

/// What every prompt of one task shares.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub instruction: String,
    pub apps: Vec<String>,
    pub rubric: String,
    /// Selected knowledge, already rendered as a prompt block (may be empty).
    pub knowledge: String,
}

impl TaskContext {
    pub fn new(instruction: &str, apps: &[String], rubric: Option<&str>, knowledge: &KnowledgeBase) -> Self {
        TaskContext {
            instruction: instruction.trim().to_string(),
            apps: apps.to_vec(),
            rubric: rubric.filter(|r| !r.trim().is_empty()).unwrap_or(DEFAULT_RUBRIC).to_string(),
            knowledge: knowledge.select(apps).prompt_block(),
        }
    }
}

/// A parsed State Agent reply.
#[derive(Debug, Clone, PartialEq)]
pub struct StateReading {
    pub state: UiState,
    /// The subtask the screen was described for.
    pub subtask: String,
    /// What must hold before the next subtask can start.
    pub pre_next: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Act { action: AtomicAction, label: Option<String> },
    /// The Actor declared the instruction complete (no-planner mode only).
    Finish,
}

/// Everything Reflection looks at to judge one action.
#[derive(Debug, Clone, Copy)]
pub struct VerifyInput<'a> {
    pub subtask: &'a str,
    pub prev: &'a UiState,
    pub pre_next: &'a Condition,
    pub action: &'a AtomicAction,
    pub before: &'a PerceptionResult,
    pub after: &'a PerceptionResult,
    pub shots: (&'a [u8], &'a [u8]),
    pub history: &'a [String],
    pub facts: Option<&'a WorldFacts>,
}

pub struct Agents<'g> {
    gateway: &'g Gateway,
    settings: AgentSettings,
}

fn user_message(text: String, images: &[&[u8]]) -> Message {
    images
        .iter()
        .filter(|img| !img.is_empty())
        .fold(Message::user(text), |m, img| m.with_image("image/png", img.to_vec()))
}

fn lines_or_none(lines: &[String]) -> String {
    if lines.is_empty() { "(none)".into() } else { lines.join("\n") }
}

fn judgment_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)best\s*[:=]?\s*(?:candidate\s*)?(\d+)").unwrap())
}

fn finish_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*finish\s*\(\s*\)\s*$").unwrap())
}

fn parse_plan_reply(text: &str, source: PlanSource) -> Result<Plan, String> {
    let secs = parse_sections(text, &[s::PLAN]).map_err(|e| e.to_string())?;
    Plan::parse(secs.get(s::PLAN).unwrap_or_default(), source).ok_or_else(|| "the plan has no subtasks".into())
}

fn parse_verdict(text: &str) -> Result<Verdict, String> {
    let secs = parse_sections(text, &[s::VERDICT]).map_err(|e| e.to_string())?;
    let word: String = secs
        .get(s::VERDICT)
        .unwrap_or_default()
        .split_whitespace()
        .take(2)
        .collect::<String>()
        .to_ascii_lowercase();
    let reason = secs.get(s::REASON).unwrap_or_default().trim();
    let reason = if reason.is_empty() { "reported without a reason" } else { reason };
    let verdict = if word.starts_with("success") {
        Some(Verdict::success())
    } else if word.starts_with("nochange") {
        Verdict::no_change(reason)
    } else if word.starts_with("fail") {
        Verdict::fail(reason)
    } else {
        None
    };
    verdict.ok_or_else(|| format!("verdict must be Success, NoChange or Fail, got {:?}", secs.get(s::VERDICT).unwrap_or_default()))
}

/// Parses `- label | precondition | a; b` lines; sequences with an
/// unparsable or element-named action are dropped.
fn parse_sequences(body: &str, apps: &[String]) -> Vec<ActionSequence> {
    body.lines()
        .filter_map(|l| l.trim().strip_prefix("- "))
        .filter_map(|l| {
            let mut parts = l.splitn(3, '|').map(str::trim);
            let (label, pre, acts) = (parts.next()?, parts.next()?, parts.next()?);
            let actions = acts
                .split(';')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(|a| match ActorCommand::parse(a) {
                    Ok(ActorCommand::Act(act)) => Some(act),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()?;
            (!label.is_empty() && !actions.is_empty()).then(|| ActionSequence {
                label: label.to_string(),
                precondition: pre.to_string(),
                actions,
                apps: apps.to_vec(),
            })
        })
        .collect()
}

/// Walks the recorded path as action literals, then retries the subtask.
pub fn path_fallback(target: &RecoveryTarget, failed_subtask: &str, reason: &str) -> RecoveryPlan {
    let mut steps: Vec<String> = target.path.iter().map(|hop| hop.action().to_string()).collect();
    steps.push(failed_subtask.to_string());
    RecoveryPlan {
        thought: format!("Replaying the recorded path after: {reason}"),
        current_subtask: steps[0].clone(),
        steps,
        target: target.target.clone(),
        goal: format!("Return to the recovery target and retry \"{failed_subtask}\"."),
        source: RecoverySource::PathFallback,
    }
}

impl<'g> Agents<'g> {
    pub fn new(gateway: &'g Gateway, settings: AgentSettings) -> Self {
        Agents { gateway, settings }
    }

    pub fn settings(&self) -> &AgentSettings {
        &self.settings
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway
    }

    /// One request, re-asked once with the parse error if the reply is unusable.
    fn ask<T, E: std::fmt::Display>(
        &self,
        req: ModelRequest,
        parse: impl Fn(&str) -> Result<T, E>,
        fail: impl Fn(E) -> AgentError,
    ) -> Result<T, AgentError> {
        let reply = self.gateway.complete(&req)?.text;
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(e) => {
                let retry = self.reprompt(&req, &reply, &e.to_string());
                let reply = self.gateway.complete(&retry)?.text;
                parse(&reply).map_err(fail)
            }
        }
    }

    fn reprompt(&self, req: &ModelRequest, reply: &str, error: &str) -> ModelRequest {
        let mut messages = req.messages.clone();
        messages.push(Message { role: crate::gateway::Role::Assistant, ..Message::user(reply) });
        messages.push(Message::user(format!(
            "Your previous reply could not be used ({error}). Answer again, following the output format exactly."
        )));
        ModelRequest::new(req.tag.clone(), messages, req.temperature)
    }

    /// Candidate fan-out plus judge selection.
    fn plan_round(&self, ctx: &TaskContext, prefix: &str, prompt: String, source: PlanSource) -> Result<Plan, AgentError> {
        let n = self.settings.candidate_count();
        let reqs: Vec<ModelRequest> = (0..n)
            .map(|k| ModelRequest::new(tags::candidate(prefix, k), vec![Message::user(prompt.clone())], self.settings.candidate_temperature))
            .collect();
        let replies = self.gateway.complete_many(&reqs);
        let mut parsed: Vec<(usize, Plan)> = Vec::new();
        let mut errors: Vec<(usize, String, String)> = Vec::new();
        for (k, reply) in replies.into_iter().enumerate() {
            match reply {
                Ok(r) => match parse_plan_reply(&r.text, source) {
                    Ok(p) => parsed.push((k, p)),
                    Err(e) => errors.push((k, r.text, e)),
                },
                Err(e) => log::warn!("candidate plan {k} failed: {e}"),
            }
        }
        if parsed.is_empty() && !errors.is_empty() {
            let retries: Vec<ModelRequest> = errors.iter().map(|(k, reply, e)| self.reprompt(&reqs[*k], reply, e)).collect();
            for ((k, _, _), reply) in errors.iter().zip(self.gateway.complete_many(&retries)) {
                if let Ok(p) = reply.map_err(|e| e.to_string()).and_then(|r| parse_plan_reply(&r.text, source)) {
                    parsed.push((*k, p));
                }
            }
        }
        match parsed.len() {
            0 => Err(AgentError::AllCandidatesMalformed),
            1 => Ok(parsed.remove(0).1),
            _ => {
                let pick = self.judge_round(ctx, prefix, &parsed)?;
                Ok(parsed.swap_remove(pick).1)
            }
        }
    }

    /// Index into `candidates` of the judge's choice.
    fn judge_round(&self, ctx: &TaskContext, prefix: &str, candidates: &[(usize, Plan)]) -> Result<usize, AgentError> {
        if candidates.len() == 1 {
            return Ok(0);
        }
        let block = candidates
            .iter()
            .map(|(k, p)| format!("Candidate {k}:\n{}", p.render()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let prompt = render(
            prompts::JUDGE,
            &[("instruction", &ctx.instruction), ("rubric", &ctx.rubric), ("candidates", &block)],
        );
        let req = ModelRequest::new(tags::judge(prefix), vec![Message::user(prompt)], 0.0);
        self.ask(
            req,
            |text| {
                let secs = parse_sections(text, &[s::JUDGMENT]).map_err(|e| e.to_string())?;
                let body = secs.get(s::JUDGMENT).unwrap_or_default();
                let n: usize = judgment_re()
                    .captures(body)
                    .and_then(|c| c[1].parse().ok())
                    .ok_or_else(|| format!("no `best: <index>` in {body:?}"))?;
                candidates.iter().position(|(k, _)| *k == n).ok_or_else(|| format!("candidate {n} does not exist"))
            },
            AgentError::UnparsableJudgment,
        )
    }

    /// Decomposes the instruction into subtasks.
    pub fn plan(&self, ctx: &TaskContext) -> Result<Plan, AgentError> {
        if ctx.instruction.is_empty() {
            return Err(AgentError::EmptyInstruction);
        }
        let prompt = render(
            prompts::PLANNER,
            &[("instruction", &ctx.instruction), ("apps", &ctx.apps.join(", ")), ("knowledge", &ctx.knowledge)],
        );
        self.plan_round(ctx, tags::PLANNER, prompt, PlanSource::Fresh)
    }

    /// Chooses among ready-made plans; one plan needs no model call.
    pub fn judge(&self, ctx: &TaskContext, candidates: &[Plan]) -> Result<usize, AgentError> {
        if candidates.is_empty() {
            return Err(AgentError::UnparsableJudgment("no candidates".into()));
        }
        let indexed: Vec<(usize, Plan)> = candidates.iter().cloned().enumerate().collect();
        self.judge_round(ctx, tags::PLANNER, &indexed)
    }

    /// A revised plan from the current screen after recovery gave up.
    pub fn replan(
        &self,
        ctx: &TaskContext,
        previous: &Plan,
        completed: &[String],
        failures: &[String],
        p: &PerceptionResult,
    ) -> Result<Plan, AgentError> {
        let prompt = render(
            prompts::REPLANNER,
            &[
                ("instruction", &ctx.instruction),
                ("apps", &ctx.apps.join(", ")),
                ("plan", &previous.render()),
                ("completed", &bullets(completed)),
                ("failures", &bullets(failures)),
                ("elements", &p.listing()),
                ("knowledge", &ctx.knowledge),
            ],
        );
        self.plan_round(ctx, tags::REPLANNER, prompt, PlanSource::Revised)
    }

    /// Asks the State Agent what screen this is.
    #[allow(clippy::too_many_arguments)]
    pub fn describe_state(
        &self,
        ctx: &TaskContext,
        plan: &Plan,
        subtask: &str,
        p: &PerceptionResult,
        screenshot: &[u8],
        beacon_history: &[String],
        history: &[String],
        step: usize,
    ) -> Result<StateReading, AgentError> {
        let conditions = if self.settings.conditions { prompts::STATE_CONDITIONS } else { "" };
        let prompt = render(
            prompts::STATE,
            &[
                ("instruction", &ctx.instruction),
                ("plan", &plan.render()),
                ("subtask", subtask),
                ("elements", &p.listing()),
                ("history", &lines_or_none(history)),
                ("beacons", &bullets(beacon_history)),
                ("conditions", conditions),
            ],
        );
        let mut required = vec![s::STATE_DESCRIPTION, s::PREDICTED_NEXT, s::APP_INFERENCE, s::STATE_BEACON];
        if self.settings.conditions {
            required.extend([s::POSTCONDITION, s::PRE_NEXT]);
        }
        let req = ModelRequest::new(tags::STATE, vec![user_message(prompt, &[screenshot])], 0.0);
        let secs: SectionedResponse = self.ask(req, |text| parse_sections(text, &required), AgentError::Malformed)?;
        let inferred = secs.get(s::APP_INFERENCE).unwrap_or_default().lines().next().unwrap_or_default().trim();
        let app = if inferred.is_empty() || canonical_label(inferred).eq_ignore_ascii_case(SYSTEM_OPERATION) {
            SYSTEM_APP.to_string()
        } else {
            canonical_label(inferred)
        };
        let beacon = secs.get(s::STATE_BEACON).unwrap_or_default().lines().next().unwrap_or_default();
        let beacon = beacon.trim().trim_start_matches("- ");
        let mut state = UiState::new(&app, beacon, step)?;
        state.description = secs.get(s::STATE_DESCRIPTION).unwrap_or_default().trim().to_string();
        state.predicted_next = secs.get(s::PREDICTED_NEXT).unwrap_or_default().trim().to_string();
        let mut pre_next = Condition::default();
        if self.settings.conditions {
            state.postcondition = Condition::parse(secs.get(s::POSTCONDITION).unwrap_or_default());
            pre_next = Condition::parse(secs.get(s::PRE_NEXT).unwrap_or_default());
        }
        Ok(StateReading { state, subtask: subtask.to_string(), pre_next })
    }

    /// Asks the Actor for one action; element taps resolve to the element's
    /// center.
    pub fn decide_action(
        &self,
        ctx: &TaskContext,
        subtask: &str,
        p: &PerceptionResult,
        screenshot: &[u8],
        state: &UiState,
        history: &[String],
    ) -> Result<Decision, AgentError> {
        let finish = if self.settings.planner {
            ""
        } else {
            "Finish(): declare the instruction complete; use it only when nothing remains to be done.\n"
        };
        let state_text = format!("{} ({}): {}", state.beacon, state.app, state.description);
        let prompt = render(
            prompts::ACTOR,
            &[
                ("instruction", &ctx.instruction),
                ("subtask", subtask),
                ("state", &state_text),
                ("elements", &p.listing()),
                ("history", &lines_or_none(history)),
                ("knowledge", &ctx.knowledge),
                ("finish", finish),
            ],
        );
        let planner = self.settings.planner;
        let req = ModelRequest::new(tags::ACTOR, vec![user_message(prompt, &[screenshot])], 0.0);
        let command = self.ask(
            req,
            |text| {
                let secs = parse_sections(text, &[s::ACTION]).map_err(|e| e.to_string())?;
                let body = secs.get(s::ACTION).unwrap_or_default();
                if finish_re().is_match(body) {
                    return if planner { Err("Finish() is not in the toolbox".into()) } else { Ok(None) };
                }
                ActorCommand::parse(body).map(Some).map_err(|e| e.0)
            },
            AgentError::NoActionParsed,
        )?;
        match command {
            None => Ok(Decision::Finish),
            Some(ActorCommand::Act(action)) => {
                let label = match &action {
                    AtomicAction::Tap { x, y } => p
                        .elements
                        .iter()
                        .rfind(|e| e.bounds.contains(*x as i64, *y as i64))
                        .map(|e| e.content.clone()),
                    _ => None,
                };
                Ok(Decision::Act { action, label })
            }
            Some(ActorCommand::TapElement(label)) => {
                let el = p.locate(&label).ok_or(AgentError::ElementNotFound(label))?;
                Ok(Decision::Act {
                    action: AtomicAction::Tap { x: el.center.0 as i32, y: el.center.1 as i32 },
                    label: Some(el.content.clone()),
                })
            }
        }
    }

    /// Success, NoChange or Fail for the last action. Predicates are checked
    /// against device facts first when mechanical checks are on.
    pub fn verify(&self, ctx: &TaskContext, input: VerifyInput<'_>) -> Result<Verdict, AgentError> {
        let unchanged = input.before.digest() == input.after.digest();
        if self.settings.mechanical_checks && self.settings.conditions {
            if let Some(facts) = input.facts {
                let unmet = [&input.prev.postcondition, input.pre_next]
                    .into_iter()
                    .find(|c| c.check(facts) == Some(false));
                if let Some(cond) = unmet {
                    let verdict = if unchanged {
                        Verdict::no_change(format!("The screen did not change and the condition does not hold: {}", cond.text))
                    } else {
                        Verdict::fail(format!("The condition does not hold after the action: {}", cond.text))
                    };
                    return Ok(verdict.expect("reason is non-empty"));
                }
            }
        }
        let conditions = if self.settings.conditions {
            render(
                prompts::VERIFY_CONDITIONS,
                &[("post", &input.prev.postcondition.text), ("pre_next", &input.pre_next.text)],
            )
        } else {
            String::new()
        };
        let prev_state = format!("{} ({}): {}", input.prev.beacon, input.prev.app, input.prev.description);
        let prompt = render(
            prompts::VERIFY,
            &[
                ("instruction", &ctx.instruction),
                ("subtask", input.subtask),
                ("prev_state", &prev_state),
                ("predicted", &input.prev.predicted_next),
                ("conditions", &conditions),
                ("action", &input.action.to_string()),
                ("before", &input.before.listing()),
                ("after", &input.after.listing()),
                ("history", &lines_or_none(input.history)),
                ("knowledge", &ctx.knowledge),
            ],
        );
        let req = ModelRequest::new(tags::VERIFY, vec![user_message(prompt, &[input.shots.0, input.shots.1])], 0.0);
        self.ask(req, parse_verdict, AgentError::UnparsableVerdict)
    }

    /// A plan back to `target`. When the target is the current state the
    /// failed subtask is simply retried, without a model call.
    pub fn build_recovery_plan(
        &self,
        ctx: &TaskContext,
        fsm: &AppFsm,
        target: &RecoveryTarget,
        current: &UiState,
        failed_subtask: &str,
        reason: &str,
    ) -> Result<RecoveryPlan, AgentError> {
        if target.target == current.id {
            return Ok(RecoveryPlan {
                thought: "The current screen is the recovery target; retry the subtask from here.".into(),
                steps: vec![failed_subtask.to_string()],
                current_subtask: failed_subtask.to_string(),
                target: target.target.clone(),
                goal: format!("Retry \"{failed_subtask}\"."),
                source: RecoverySource::Retry,
            });
        }
        let node = fsm.state(&target.target).ok_or_else(|| crate::fsm::FsmError::UnknownState(target.target.clone()))?;
        let target_text = format!("State ID: {}\nBeacon: {}\nDescription: {}", node.id, node.beacon, node.description);
        let beacon_of = |id| fsm.state(id).map_or_else(|| id.to_string(), |st: &UiState| st.beacon.clone());
        let path: Vec<String> = target
            .path
            .iter()
            .map(|hop| format!("{} --{}--> {}", beacon_of(hop.from()), hop.action(), beacon_of(hop.to())))
            .collect();
        let current_text = format!("{} ({}): {}", current.beacon, current.app, current.description);
        let prompt = render(
            prompts::RECOVERY,
            &[
                ("instruction", &ctx.instruction),
                ("subtask", failed_subtask),
                ("reason", reason),
                ("current", &current_text),
                ("target", &target_text),
                ("path", &bullets(&path)),
            ],
        );
        let req = ModelRequest::new(tags::RECOVERY, vec![Message::user(prompt)], 0.0);
        let id = target.target.clone();
        self.ask(req, |text| RecoveryPlan::parse(text, id.clone()), AgentError::UnparsableRecovery)
    }

    /// Knowledge to keep from a finished task. FSMs are always kept; cue
    /// extraction is skipped (with a warning) if the Mentor call fails.
    pub fn retain(
        &self,
        ctx: &TaskContext,
        status: &str,
        history: &[String],
        errors: &[(usize, Verdict)],
        transitions: &[String],
        fsms: &std::collections::BTreeMap<String, AppFsm>,
    ) -> KnowledgeBase {
        let mut delta = KnowledgeBase { fsms: fsms.clone(), ..Default::default() };
        let error_lines: Vec<String> = errors.iter().map(|(step, v)| format!("step {step}: {v}")).collect();
        let prompt = render(
            prompts::MENTOR,
            &[
                ("instruction", &ctx.instruction),
                ("status", status),
                ("history", &lines_or_none(history)),
                ("errors", &bullets(&error_lines)),
                ("transitions", &bullets(transitions)),
            ],
        );
        let req = ModelRequest::new(tags::MENTOR, vec![Message::user(prompt)], 0.0);
        match self.gateway.complete(&req) {
            Ok(reply) => match parse_sections(&reply.text, &[s::CUES]) {
                Ok(secs) => {
                    delta.guidance_cues = secs
                        .get(s::CUES)
                        .unwrap_or_default()
                        .lines()
                        .filter_map(|l| l.trim().strip_prefix("- "))
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .map(|c| GuidanceCue { text: c.to_string(), apps: ctx.apps.clone() })
                        .collect();
                    delta.action_sequences = parse_sequences(secs.get(s::SEQUENCES).unwrap_or_default(), &ctx.apps);
                }
                Err(e) => log::warn!("mentor reply unusable, keeping FSMs only: {e}"),
            },
            Err(e) => log::warn!("mentor call failed, keeping FSMs only: {e}"),
        }
        delta
    }
}
