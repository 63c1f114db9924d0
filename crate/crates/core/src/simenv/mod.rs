//! Deterministic simulated phone.
//!
//! Apps are declared in a [`WorldSpec`]; [`World`] steps through them one
//! atomic action at a time, optionally injecting seeded faults (dropped
//! taps, declared misroutes), and renders each screen to a PNG whose
//! ground-truth elements the mock perceiver reads back.

mod oracle;
mod render;
mod world;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::condition::WorldFacts;
use crate::device::AtomicAction;
use crate::perception::ScreenElement;

pub use oracle::{OracleModel, SolutionStep, TaskSolution};
pub use world::{
    load_world, AppScript, Direction, ElementScript, Mutation, MutationOp, Rule, ScreenScript, Trigger, WorldError,
    WorldSpec, WORLD_SCHEMA_VERSION,
};

/// Foreground "app" while the launcher is showing.
pub const LAUNCHER: &str = "Launcher";
pub const LAUNCHER_SCREEN: &str = "home";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultPolicy {
    pub seed: u64,
    /// Probability that a tap is silently dropped.
    pub p_noop: f64,
    /// Probability that a rule with a declared misroute goes there instead.
    pub p_misroute: f64,
}

impl FaultPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_noop", self.p_noop), ("p_misroute", self.p_misroute)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Noop,
    Misroute,
}

/// An injected deviation; `step` is the 0-based index of the action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub step: usize,
    pub kind: FaultKind,
    pub action: AtomicAction,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub app: String,
    pub screen: String,
}

impl Location {
    fn launcher() -> Self {
        Location { app: LAUNCHER.into(), screen: LAUNCHER_SCREEN.into() }
    }

    pub fn is_launcher(&self) -> bool {
        self.app == LAUNCHER
    }
}

#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    policy: FaultPolicy,
    rng: ChaCha8Rng,
    location: Location,
    vars: BTreeMap<String, serde_json::Value>,
    /// Per-app back stacks of screen ids.
    stacks: BTreeMap<String, Vec<String>>,
    recents: Vec<String>,
    visited: Vec<(String, String)>,
    typed: Vec<String>,
    actions: Vec<(AtomicAction, Option<String>)>,
    faults: Vec<FaultEvent>,
    steps: usize,
}

/// Screenshot plus the elements it shows.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub png: Vec<u8>,
    pub elements: Vec<ScreenElement>,
}

impl World {
    pub fn new(spec: WorldSpec, policy: FaultPolicy) -> Self {
        let vars = spec.vars.clone();
        let location = Location::launcher();
        World {
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            policy,
            visited: vec![(location.app.clone(), location.screen.clone())],
            location,
            vars,
            stacks: BTreeMap::new(),
            recents: Vec::new(),
            typed: Vec::new(),
            actions: Vec::new(),
            faults: Vec::new(),
            steps: 0,
            spec,
        }
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn location(&self) -> &Location {
        &self.location
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn faults(&self) -> &[FaultEvent] {
        &self.faults
    }

    pub fn vars(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.vars
    }

    pub fn foreground_app(&self) -> &str {
        &self.location.app
    }

    fn screen_script(&self, loc: &Location) -> Option<ScreenScript> {
        if loc.is_launcher() {
            Some(self.spec.launcher_screen())
        } else {
            self.spec.app(&loc.app).and_then(|a| a.screens.get(&loc.screen)).cloned()
        }
    }

    fn var_facts(&self) -> WorldFacts {
        WorldFacts {
            foreground_app: Some(self.location.app.clone()),
            screen: Some(self.location.screen.clone()),
            vars: self.vars.clone(),
            visited: self.visited.clone(),
            typed: self.typed.clone(),
            actions: self.actions.clone(),
            visible: Vec::new(),
        }
    }

    fn expand(&self, template: &str) -> String {
        let mut out = template.to_string();
        for (k, v) in &self.vars {
            let needle = format!("{{{k}}}");
            if out.contains(&needle) {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out = out.replace(&needle, &s);
            }
        }
        out
    }

    /// Visible elements of the current screen with their script ids.
    fn visible(&self) -> Vec<(String, ScreenElement)> {
        let Some(screen) = self.screen_script(&self.location) else { return Vec::new() };
        let facts = self.var_facts();
        screen
            .elements
            .iter()
            .filter(|e| e.visible_if.as_ref().is_none_or(|p| p.eval(&facts)))
            .map(|e| {
                let mut el = ScreenElement::new(e.kind, self.expand(&e.content), e.bounds);
                if let Some(c) = e.center {
                    el.center = c;
                }
                (e.id.clone(), el)
            })
            .collect()
    }

    pub fn facts(&self) -> WorldFacts {
        let mut f = self.var_facts();
        f.visible = self.visible().into_iter().map(|(_, e)| e.content).collect();
        f
    }

    /// Whether the current screen's entry predicate (if any) holds.
    pub fn entry_holds(&self) -> bool {
        self.screen_script(&self.location)
            .and_then(|s| s.entry)
            .is_none_or(|p| p.eval(&self.facts()))
    }

    pub fn beacon(&self) -> String {
        self.screen_script(&self.location).map(|s| s.beacon).unwrap_or_default()
    }

    pub fn render(&self) -> Rendered {
        let elements: Vec<ScreenElement> = self.visible().into_iter().map(|(_, e)| e).collect();
        let key = format!("{}/{}", self.location.app, self.location.screen);
        Rendered { png: render::render_png(&key, self.spec.screen_size, &elements), elements }
    }

    fn arrive(&mut self, app: &str, screen: &str) {
        if self.location.app != app {
            let prev = std::mem::replace(&mut self.location.app, app.to_string());
            self.recents.retain(|a| a != &prev);
            self.recents.push(prev);
        }
        self.location.screen = screen.to_string();
        self.visited.push((app.to_string(), screen.to_string()));
    }

    fn launch(&mut self, app: &str) {
        let Some(script) = self.spec.app(app) else { return };
        let (name, initial) = (script.name.clone(), script.initial.clone());
        self.stacks.insert(name.clone(), vec![initial.clone()]);
        self.arrive(&name, &initial);
    }

    fn navigate(&mut self, screen: &str) {
        let app = self.location.app.clone();
        let stack = self.stacks.entry(app.clone()).or_default();
        if stack.last().map(String::as_str) != Some(screen) {
            if let Some(pos) = stack.iter().position(|s| s == screen) {
                stack.truncate(pos + 1);
            } else {
                stack.push(screen.to_string());
            }
        }
        self.arrive(&app, screen);
    }

    fn go_home(&mut self) {
        if !self.location.is_launcher() {
            self.arrive(LAUNCHER, LAUNCHER_SCREEN);
        }
    }

    fn apply_mutations(&mut self, mutations: &[Mutation], input: Option<&str>) {
        for m in mutations {
            let value = match m.op {
                MutationOp::Set => m.value.clone(),
                MutationOp::Add => {
                    let cur = self.vars.get(&m.var).and_then(|v| v.as_i64()).unwrap_or(0);
                    serde_json::json!(cur + m.value.as_i64().unwrap_or(0))
                }
                MutationOp::SetInput => serde_json::json!(input.unwrap_or_default()),
            };
            self.vars.insert(m.var.clone(), value);
        }
    }

    fn matching_rule(&self, action: &AtomicAction, hit: Option<&str>) -> Option<Rule> {
        let app = self.spec.app(&self.location.app)?;
        app.rules
            .iter()
            .filter(|r| r.screen == self.location.screen)
            .find(|r| match (&r.on, action) {
                (Trigger::Tap(id), AtomicAction::Tap { .. }) => hit == Some(id.as_str()),
                (Trigger::Type(want), AtomicAction::Type { text }) => {
                    want.as_ref().is_none_or(|w| w.trim().eq_ignore_ascii_case(text.trim()))
                }
                (Trigger::Enter, AtomicAction::Enter) | (Trigger::Back, AtomicAction::Back) | (Trigger::Wait, AtomicAction::Wait) => true,
                (Trigger::Swipe(dir), AtomicAction::Swipe { x1, y1, x2, y2 }) => dir.is_none_or(|d| {
                    let (dx, dy) = (x2 - x1, y2 - y1);
                    match d {
                        Direction::Up => dy < 0 && dy.abs() >= dx.abs(),
                        Direction::Down => dy > 0 && dy.abs() >= dx.abs(),
                        Direction::Left => dx < 0 && dx.abs() > dy.abs(),
                        Direction::Right => dx > 0 && dx.abs() > dy.abs(),
                    }
                }),
                _ => false,
            })
            .cloned()
    }

    /// Applies one action. Unmatched actions leave the screen as it is,
    /// except Back, which pops the app's screen stack when no rule claims it.
    pub fn step(&mut self, action: &AtomicAction) {
        let index = self.steps;
        self.steps += 1;
        let visible = self.visible();
        let hit = match action {
            AtomicAction::Tap { x, y } => visible
                .iter()
                .rev()
                .find(|(_, e)| e.bounds.contains(*x as i64, *y as i64))
                .map(|(id, e)| (id.clone(), e.content.clone())),
            _ => None,
        };
        if matches!(action, AtomicAction::Tap { .. }) && self.rng.random_bool(self.policy.p_noop) {
            // the app never saw the tap, so it resolved to no element
            self.faults.push(FaultEvent { step: index, kind: FaultKind::Noop, action: action.clone() });
            self.actions.push((action.clone(), None));
            return;
        }
        self.actions.push((action.clone(), hit.as_ref().map(|(_, label)| label.clone())));
        if let AtomicAction::Type { text } = action {
            self.typed.push(text.clone());
        }

        match action {
            AtomicAction::Home => return self.go_home(),
            AtomicAction::OpenApp { name } => return self.launch(name),
            AtomicAction::SwitchApp => {
                // the most recently used app other than the current one
                let prev = self.recents.iter().rev().find(|a| **a != self.location.app && *a != LAUNCHER).cloned();
                if let Some(prev) = prev {
                    if let Some(screen) = self.stacks.get(&prev).and_then(|s| s.last()).cloned() {
                        self.arrive(&prev, &screen);
                    }
                }
                return;
            }
            _ => {}
        }

        if self.location.is_launcher() {
            if let Some((id, _)) = &hit {
                if let Some(app) = id.strip_prefix("app:") {
                    let app = app.to_string();
                    self.launch(&app);
                }
            }
            return;
        }

        let input = match action {
            AtomicAction::Type { text } => Some(text.as_str()),
            _ => None,
        };
        if let Some(rule) = self.matching_rule(action, hit.as_ref().map(|(id, _)| id.as_str())) {
            let mut dest = rule.to.clone();
            if let Some(wrong) = &rule.misroute {
                if self.rng.random_bool(self.policy.p_misroute) {
                    self.faults.push(FaultEvent { step: index, kind: FaultKind::Misroute, action: action.clone() });
                    dest = Some(wrong.clone());
                }
            }
            self.apply_mutations(&rule.mutate, input);
            if let Some(d) = dest {
                self.navigate(&d);
            }
        } else if matches!(action, AtomicAction::Back) {
            let app = self.location.app.clone();
            let stack = self.stacks.entry(app.clone()).or_default();
            stack.pop();
            match stack.last().cloned() {
                Some(prev) => self.arrive(&app, &prev),
                None => self.go_home(),
            }
        }
    }
}

#[cfg(test)]
mod tests;
