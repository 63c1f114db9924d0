//! A scripted stand-in for the model backend.
//!
//! The oracle answers every agent prompt from two sources: the world script
//! (to recognise the screen from its element listing and to navigate) and a
//! per-task solution listing the intended subtasks and their actions. Its
//! replies are ordinary text in the reply formats the agents parse, so a run
//! against the oracle can be recorded into a replay archive and replayed
//! without it.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::world::{ScreenScript, Trigger, WorldSpec};
use super::LAUNCHER;
use crate::agents::prompts::{sections as s, SYSTEM_OPERATION};
use crate::condition::Predicate;
use crate::fsm::label_key;
use crate::gateway::{parse_sections, GatewayError, ModelBackend, ModelRequest, ModelResponse, SectionedResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionStep {
    pub subtask: String,
    #[serde(default)]
    pub rationale: String,
    /// Action literal as the Actor would write it, e.g. `Tap('Search')`.
    pub action: String,
    /// What holds once the subtask is done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSolution {
    pub task_id: String,
    pub steps: Vec<SolutionStep>,
    /// Steps offered when a revised plan is requested; defaults to the
    /// uncompleted remainder of `steps`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replan: Vec<SolutionStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cues: Vec<String>,
}

/// A screen recognised from an element listing.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Recognised {
    app: String,
    screen: String,
    beacon: String,
}

#[derive(Debug, Clone, PartialEq)]
struct Listed {
    content: String,
    center: (u32, u32),
}

/// A scripted screen with its element templates compiled.
#[derive(Debug)]
struct IndexedScreen {
    app: String,
    screen: String,
    beacon: String,
    element_count: usize,
    templates: Vec<((u32, u32), Regex)>,
}

#[derive(Debug, Clone)]
pub struct OracleModel {
    world: WorldSpec,
    tasks: BTreeMap<String, TaskSolution>,
    index: Arc<Vec<IndexedScreen>>,
}

fn listing_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^\s*\d+\. \[(?:text|icon)\] "(.*)" at \((\d+), (\d+)\)\s*$"#).unwrap())
}

fn history_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^- step \d+ \[[^\]]*\]: (.+?) -> (\w+)").unwrap())
}

fn parse_listing(text: &str) -> Vec<Listed> {
    text.lines()
        .filter_map(|l| listing_re().captures(l))
        .map(|c| Listed { content: c[1].to_string(), center: (c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0)) })
        .collect()
}

/// Regex for an element content template, `{var}` matching anything.
fn template_re(template: &str) -> Regex {
    let mut pattern = String::from("^");
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        match rest[open..].find('}') {
            Some(close) => {
                pattern.push_str(&regex::escape(&rest[..open]));
                pattern.push_str(".*");
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    pattern.push_str(&regex::escape(rest));
    pattern.push('$');
    Regex::new(&pattern).expect("escaped template")
}

fn same(a: &str, b: &str) -> bool {
    label_key(a) == label_key(b)
}

fn plan_text(thought: &str, steps: &[&SolutionStep]) -> String {
    let items: Vec<String> = steps
        .iter()
        .enumerate()
        .map(|(i, st)| format!("{}. {} | Rationale: {}", i + 1, st.subtask, st.rationale))
        .collect();
    format!("### {} ###\n{thought}\n\n### {} ###\n{}\n", s::THOUGHT, s::PLAN, items.join("\n"))
}

/// The screen a predicate pins down, if it names one.
fn expected_screen(p: &Predicate) -> Option<(String, String)> {
    match p {
        Predicate::OnScreen { app, screen } => Some((app.clone(), screen.clone())),
        Predicate::All(ps) => ps.iter().find_map(expected_screen),
        _ => None,
    }
}

impl OracleModel {
    pub fn new(world: WorldSpec) -> Self {
        let index = Arc::new(Self::index(&world));
        OracleModel { world, tasks: BTreeMap::new(), index }
    }

    /// Registers the solution for the task with this instruction.
    pub fn with_task(mut self, instruction: &str, solution: TaskSolution) -> Self {
        self.tasks.insert(label_key(instruction), solution);
        self
    }

    fn index(world: &WorldSpec) -> Vec<IndexedScreen> {
        let mut all = vec![(LAUNCHER.to_string(), super::LAUNCHER_SCREEN.to_string(), world.launcher_screen())];
        for app in &world.apps {
            for (id, screen) in &app.screens {
                all.push((app.name.clone(), id.clone(), screen.clone()));
            }
        }
        all.into_iter()
            .map(|(app, screen, script): (String, String, ScreenScript)| IndexedScreen {
                app,
                screen,
                element_count: script.elements.len(),
                templates: script
                    .elements
                    .iter()
                    .map(|e| (e.center.unwrap_or_else(|| e.bounds.center()), template_re(&e.content)))
                    .collect(),
                beacon: script.beacon,
            })
            .collect()
    }

    fn recognised(s: &IndexedScreen) -> Recognised {
        Recognised { app: s.app.clone(), screen: s.screen.clone(), beacon: s.beacon.clone() }
    }

    /// Finds the scripted screen every listed element belongs to; among
    /// several, the one declaring the fewest elements.
    fn recognise(&self, listing: &str) -> Option<Recognised> {
        let listed = parse_listing(listing);
        if listed.is_empty() {
            return None;
        }
        self.index
            .iter()
            .filter(|sc| {
                listed.iter().all(|l| sc.templates.iter().any(|(c, re)| *c == l.center && re.is_match(&l.content)))
            })
            .min_by_key(|sc| sc.element_count)
            .map(Self::recognised)
    }

    fn solution(&self, secs: &SectionedResponse) -> Option<&TaskSolution> {
        secs.get(s::INSTRUCTION).and_then(|i| self.tasks.get(&label_key(i)))
    }

    fn successes(secs: &SectionedResponse) -> usize {
        secs.get(s::HISTORY)
            .map(|h| h.lines().filter_map(|l| history_re().captures(l)).filter(|c| &c[2] == "Success").count())
            .unwrap_or(0)
    }

    /// The solution step a subtask refers to. The bare instruction (no
    /// planner) maps to the next step after the successful actions so far.
    fn step<'a>(&self, sol: &'a TaskSolution, secs: &SectionedResponse, subtask: &str) -> Option<&'a SolutionStep> {
        if let Some(st) = sol.steps.iter().chain(&sol.replan).find(|st| same(&st.subtask, subtask)) {
            return Some(st);
        }
        if secs.get(s::INSTRUCTION).is_some_and(|i| same(i, subtask)) {
            return sol.steps.get(Self::successes(secs)).or(sol.steps.last());
        }
        None
    }

    /// The bare instruction is the subtask and every solution step has
    /// already succeeded.
    fn instruction_done(&self, secs: &SectionedResponse, subtask: &str) -> bool {
        let is_instruction = secs.get(s::INSTRUCTION).is_some_and(|i| same(i, subtask));
        let known = self.solution(secs).is_some_and(|sol| !sol.steps.iter().any(|st| same(&st.subtask, subtask)));
        is_instruction && known && self.solution(secs).is_some_and(|sol| Self::successes(secs) >= sol.steps.len())
    }

    fn return_target(&self, subtask: &str, current: Option<&Recognised>) -> Option<Recognised> {
        let t = subtask.trim();
        let beacon = t.get(..10).filter(|p| p.eq_ignore_ascii_case("return to "))?;
        let beacon = t[beacon.len()..].trim().trim_end_matches('.');
        let prefer = current.map(|c| c.app.clone());
        let mut found: Vec<Recognised> = self
            .index
            .iter()
            .filter(|sc| same(&sc.beacon, beacon))
            .map(Self::recognised)
            .collect();
        found.sort_by_key(|r| Some(&r.app) != prefer.as_ref());
        found.into_iter().next()
    }

    fn expectation(&self, sol: Option<&TaskSolution>, secs: &SectionedResponse, subtask: &str, here: Option<&Recognised>) -> Option<Predicate> {
        if let Some(target) = self.return_target(subtask, here) {
            return Some(Predicate::OnScreen { app: target.app, screen: target.screen });
        }
        sol.and_then(|sol| self.step(sol, secs, subtask)).and_then(|st| st.expect.clone())
    }

    pub fn reply(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        let text = req.text();
        let secs = parse_sections(&text, &[]).unwrap_or_default();
        let family = req.tag.split('.').take(2).collect::<Vec<_>>();
        match family.as_slice() {
            ["planner", "candidate"] | ["replanner", "candidate"] => self.plan_reply(req, &secs),
            ["planner", "judge"] | ["replanner", "judge"] => Ok(self.judge_reply(&secs)),
            ["state", ..] => Ok(self.state_reply(&text, &secs)),
            ["actor", ..] => Ok(self.actor_reply(&secs)),
            ["verify", ..] => Ok(self.verify_reply(&secs)),
            ["recovery", ..] => Ok(self.recovery_reply(&secs)),
            ["mentor", ..] => Ok(self.mentor_reply(&secs)),
            _ => Err(GatewayError::InvalidRequest(format!("oracle has no script for tag {:?}", req.tag))),
        }
    }

    fn plan_reply(&self, req: &ModelRequest, secs: &SectionedResponse) -> Result<String, GatewayError> {
        let sol = self
            .solution(secs)
            .ok_or_else(|| GatewayError::InvalidRequest("oracle has no solution for this instruction".into()))?;
        let revised = req.tag.starts_with("replanner");
        let steps: Vec<&SolutionStep> = if revised && !sol.replan.is_empty() {
            sol.replan.iter().collect()
        } else if revised {
            let done: Vec<String> = secs
                .get(s::COMPLETED)
                .map(|c| c.lines().map(|l| l.trim().trim_start_matches("- ").to_string()).collect())
                .unwrap_or_default();
            sol.steps.iter().filter(|st| !done.iter().any(|d| same(d, &st.subtask))).collect()
        } else {
            sol.steps.iter().collect()
        };
        // Candidate k > 0 drops one subtask, so candidates differ and the
        // judge has something to choose between.
        let k: usize = req.tag.rsplit('.').next().and_then(|k| k.parse().ok()).unwrap_or(0);
        let mut chosen = steps.clone();
        if k > 0 && chosen.len() > 1 {
            chosen.remove((k - 1) % chosen.len());
        }
        let thought = format!("The instruction needs {} subtasks, performed in order.", chosen.len());
        Ok(plan_text(&thought, &chosen))
    }

    fn judge_reply(&self, secs: &SectionedResponse) -> String {
        let mut best = (0usize, 0usize);
        let mut current: Option<(usize, usize)> = None;
        let header = Regex::new(r"^\s*Candidate (\d+):").unwrap();
        for line in secs.get(s::CANDIDATES).unwrap_or_default().lines() {
            if let Some(c) = header.captures(line) {
                if let Some(done) = current.take() {
                    if done.1 > best.1 {
                        best = done;
                    }
                }
                current = Some((c[1].parse().unwrap_or(0), 0));
            } else if let Some(cur) = current.as_mut() {
                if line.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit()) {
                    cur.1 += 1;
                }
            }
        }
        if let Some(done) = current {
            if done.1 > best.1 {
                best = done;
            }
        }
        format!(
            "### {} ###\nbest: {}\n\n### {} ###\nCandidate {} covers every part of the instruction with the fewest assumptions.\n",
            s::JUDGMENT,
            best.0,
            s::REASON,
            best.0
        )
    }

    fn state_reply(&self, prompt: &str, secs: &SectionedResponse) -> String {
        let here = self.recognise(secs.get(s::ELEMENTS).unwrap_or_default());
        let subtask = secs.get(s::SUBTASK).unwrap_or_default();
        let sol = self.solution(secs);
        let (app, beacon, screen) = match &here {
            Some(r) if r.app == LAUNCHER => (SYSTEM_OPERATION.to_string(), r.beacon.clone(), r.screen.clone()),
            Some(r) => (r.app.clone(), r.beacon.clone(), r.screen.clone()),
            None => (SYSTEM_OPERATION.to_string(), "Unrecognised Screen".to_string(), "?".to_string()),
        };
        let visible: Vec<String> =
            parse_listing(secs.get(s::ELEMENTS).unwrap_or_default()).into_iter().map(|l| l.content).collect();
        let expect = self.expectation(sol, secs, subtask, here.as_ref());
        let predicted = match expect.as_ref().and_then(expected_screen) {
            Some((a, sc)) => {
                let b = self.world.app(&a).and_then(|ap| ap.screens.get(&sc)).map(|x| x.beacon.clone()).unwrap_or(sc);
                format!("The screen shows {b} once \"{subtask}\" is done.")
            }
            None => format!("The screen reflects the completion of \"{subtask}\"."),
        };
        let mut out = format!(
            "### {} ###\n{beacon}. Visible elements: {}.\n\n### {} ###\n{predicted}\n\n### {} ###\n{app}\n\n### {} ###\n{beacon}\n",
            s::STATE_DESCRIPTION,
            if visible.is_empty() { "none".to_string() } else { visible.join(", ") },
            s::PREDICTED_NEXT,
            s::APP_INFERENCE,
            s::STATE_BEACON,
        );
        if prompt.contains(&format!("### {} ###", s::POSTCONDITION)) {
            let cond = |prose: String| match &expect {
                Some(p) => format!("{prose} @pred {}", serde_json::to_string(p).expect("predicate serializes")),
                None => prose,
            };
            out.push_str(&format!(
                "\n### {} ###\n{}\n\n### {} ###\n{}\n",
                s::POSTCONDITION,
                cond(format!("\"{subtask}\" has been completed.")),
                s::PRE_NEXT,
                cond(format!("The result of \"{subtask}\" is visible.")),
            ));
        }
        out.push_str(&format!("\n### Reasoning ###\nThe elements match the scripted screen \"{screen}\".\n"));
        out
    }

    fn navigate(&self, here: &Recognised, target: &Recognised, listing: &[Listed]) -> String {
        if here.app != target.app {
            return format!("Open_App('{}')", target.app);
        }
        let Some(app) = self.world.app(&here.app) else { return "Back()".into() };
        let Some(screen) = app.screens.get(&here.screen) else { return "Back()".into() };
        for rule in app.rules.iter().filter(|r| r.screen == here.screen && r.to.as_deref() == Some(target.screen.as_str())) {
            if let Trigger::Tap(id) = &rule.on {
                if let Some(el) = screen.elements.iter().find(|e| &e.id == id) {
                    let center = el.center.unwrap_or_else(|| el.bounds.center());
                    if let Some(l) = listing.iter().find(|l| l.center == center) {
                        return format!("Tap('{}')", l.content.replace('\'', "\\'"));
                    }
                }
            }
        }
        "Back()".into()
    }

    fn actor_reply(&self, secs: &SectionedResponse) -> String {
        let listing_text = secs.get(s::ELEMENTS).unwrap_or_default();
        let here = self.recognise(listing_text);
        let subtask = secs.get(s::SUBTASK).unwrap_or_default();
        let (thought, action) = if let (Some(target), Some(here)) = (self.return_target(subtask, here.as_ref()), here.as_ref()) {
            (
                format!("Heading back to {} from {}.", target.beacon, here.beacon),
                self.navigate(here, &target, &parse_listing(listing_text)),
            )
        } else if self.instruction_done(secs, subtask) {
            ("Every part of the instruction has been carried out.".into(), "Finish()".into())
        } else if let Some(st) = self.solution(secs).and_then(|sol| self.step(sol, secs, subtask)) {
            (format!("\"{}\" is done with a single action on this screen.", st.subtask), st.action.clone())
        } else {
            ("This subtask does not correspond to anything on the current screen.".into(), "none".into())
        };
        format!("### {} ###\n{thought}\n\n### {} ###\n{action}\n", s::THOUGHT, s::ACTION)
    }

    fn verify_reply(&self, secs: &SectionedResponse) -> String {
        let before = secs.get(s::ELEMENTS_BEFORE).unwrap_or_default();
        let after = secs.get(s::ELEMENTS_AFTER).unwrap_or_default();
        let subtask = secs.get(s::SUBTASK).unwrap_or_default();
        let now = self.recognise(after);
        let (verdict, reason) = if parse_listing(before) == parse_listing(after) {
            ("NoChange", "The screen did not change after the action.".to_string())
        } else {
            let was = self.recognise(before);
            let expect = self.expectation(self.solution(secs), secs, subtask, was.as_ref());
            match (expect.as_ref().and_then(expected_screen), &now) {
                (Some((app, screen)), Some(n)) if !(same(&app, &n.app) && screen == n.screen) => {
                    ("Fail", format!("Expected the {app} screen \"{screen}\" but the screen shows {}.", n.beacon))
                }
                _ => ("Success", String::new()),
            }
        };
        format!("### {} ###\n{verdict}\n\n### {} ###\n{reason}\n", s::VERDICT, s::REASON)
    }

    fn recovery_reply(&self, secs: &SectionedResponse) -> String {
        let failed = secs.get(s::FAILED_SUBTASK).unwrap_or_default().trim().to_string();
        let target = secs.get(s::RECOVERY_TARGET).unwrap_or_default();
        let beacon = target
            .lines()
            .find_map(|l| l.trim().strip_prefix("Beacon:"))
            .map(|b| b.trim().to_string())
            .unwrap_or_default();
        let back = format!("Return to {beacon}");
        serde_json::json!({
            "goal": format!("Return to {beacon} to reattempt \"{failed}\"."),
            "thought": format!("{beacon} was verified earlier and leads directly to the failed subtask, so returning there gives a clean slate to retry it."),
            "plan": [back.clone(), failed],
            "current_subtask": back,
        })
        .to_string()
    }

    fn mentor_reply(&self, secs: &SectionedResponse) -> String {
        let sol = self.solution(secs);
        let mut cues: Vec<String> = sol.map(|s| s.cues.clone()).unwrap_or_default();
        let errors = secs.get(s::ERRORS).unwrap_or_default().trim();
        if !errors.is_empty() && errors != "(none)" {
            cues.push("When a tap leaves the screen unchanged, tap the same element again before changing the plan.".into());
        }
        let actions: Vec<String> = secs
            .get(s::HISTORY)
            .unwrap_or_default()
            .lines()
            .filter_map(|l| history_re().captures(l))
            .filter(|c| &c[2] == "Success")
            .map(|c| c[1].to_string())
            .collect();
        let mut out = format!("### {} ###\n", s::CUES);
        for c in &cues {
            out.push_str(&format!("- {c}\n"));
        }
        out.push_str(&format!("\n### {} ###\n", s::SEQUENCES));
        if let (Some(sol), false) = (sol, actions.is_empty()) {
            out.push_str(&format!("- {} | The device shows the home screen | {}\n", sol.task_id, actions.join("; ")));
        }
        out
    }
}

impl ModelBackend for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        Ok(ModelResponse { text: self.reply(req)?, backend: "oracle".into(), latency: std::time::Duration::ZERO, usage: None })
    }
}
