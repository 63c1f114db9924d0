//! Per-app finite state machines built while a task runs.
//!
//! A state is one screen, identified by the digest of its app and canonical
//! beacon. Transitions are `(from, action, to)` triples annotated with the
//! precondition of the next state and the postcondition of the current one.
//! Hops between apps are kept in the [`TaskJournal`], never inside an
//! [`AppFsm`].

mod export;
mod id;
mod journal;
mod recovery;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::device::AtomicAction;
use crate::verdict::Verdict;

pub use export::{export_fsm, import_fsm_json, ExportFormat};
pub use id::{canonical_label, label_key, state_id, StateId};
pub use journal::{CrossAppEdge, JournalEntry, TaskJournal};
pub use recovery::{find_recovery_target, PathHop, RecoveryTarget};

/// Pseudo-app that owns home-screen, launcher and other system UI states.
pub const SYSTEM_APP: &str = "System";

pub const FSM_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsmError {
    #[error("{0} is empty after canonicalization")]
    EmptyKey(&'static str),
    #[error("state belongs to app {got:?}, FSM is for {expected:?}")]
    AppMismatch { expected: String, got: String },
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("malformed state id {0:?}")]
    MalformedId(String),
    #[error("unsupported export format {0:?}")]
    UnsupportedFormat(String),
    #[error("journal step {got} does not follow step {last}")]
    StepOrder { last: usize, got: usize },
    #[error("invalid FSM document: {0}")]
    Document(String),
}

/// One discovered screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiState {
    pub id: StateId,
    pub app: String,
    pub beacon: String,
    pub description: String,
    pub predicted_next: String,
    #[serde(default)]
    pub precondition: Condition,
    #[serde(default)]
    pub postcondition: Condition,
    pub verified: bool,
    pub first_seen_step: usize,
    pub last_seen_step: usize,
}

impl UiState {
    pub fn new(app: &str, beacon: &str, step: usize) -> Result<Self, FsmError> {
        let id = state_id(app, beacon)?;
        Ok(UiState {
            id,
            app: canonical_label(app),
            beacon: canonical_label(beacon),
            description: String::new(),
            predicted_next: String::new(),
            precondition: Condition::default(),
            postcondition: Condition::default(),
            verified: false,
            first_seen_step: step,
            last_seen_step: step,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateId,
    pub action: AtomicAction,
    pub to: StateId,
    #[serde(default)]
    pub pre_next: Condition,
    #[serde(default)]
    pub post_current: Condition,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FsmDocument", into = "FsmDocument")]
pub struct AppFsm {
    app: String,
    states: BTreeMap<StateId, UiState>,
    transitions: Vec<Transition>,
    initial: Option<StateId>,
    current_goal: Option<String>,
    beacon_index: BTreeMap<String, StateId>,
}

impl AppFsm {
    pub fn new(app: &str) -> Self {
        AppFsm {
            app: canonical_label(app),
            states: BTreeMap::new(),
            transitions: Vec::new(),
            initial: None,
            current_goal: None,
            beacon_index: BTreeMap::new(),
        }
    }

    pub fn app(&self) -> &str {
        &self.app
    }

    pub fn initial(&self) -> Option<&StateId> {
        self.initial.as_ref()
    }

    pub fn current_goal(&self) -> Option<&str> {
        self.current_goal.as_deref()
    }

    pub fn set_goal(&mut self, goal: Option<String>) {
        self.current_goal = goal;
    }

    pub fn state(&self, id: &StateId) -> Option<&UiState> {
        self.states.get(id)
    }

    pub fn states(&self) -> impl Iterator<Item = &UiState> {
        self.states.values()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn lookup_beacon(&self, beacon: &str) -> Option<&StateId> {
        self.beacon_index.get(&label_key(beacon))
    }

    pub fn out_degree(&self, id: &StateId) -> usize {
        self.transitions.iter().filter(|t| &t.from == id).count()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Inserts a screen or refreshes the one already filed under its beacon.
    pub fn upsert_state(&mut self, mut node: UiState) -> Result<StateId, FsmError> {
        if label_key(&node.app) != label_key(&self.app) {
            return Err(FsmError::AppMismatch { expected: self.app.clone(), got: node.app });
        }
        let id = state_id(&self.app, &node.beacon)?;
        let key = label_key(&node.beacon);
        if let Some(existing_id) = self.beacon_index.get(&key) {
            let existing = self.states.get_mut(existing_id).expect("beacon index out of sync");
            existing.description = node.description;
            existing.predicted_next = node.predicted_next;
            existing.precondition = node.precondition;
            existing.postcondition = node.postcondition;
            existing.verified |= node.verified;
            existing.last_seen_step = existing.last_seen_step.max(node.last_seen_step);
            existing.first_seen_step = existing.first_seen_step.min(node.first_seen_step);
            return Ok(existing_id.clone());
        }
        node.id = id.clone();
        node.app = self.app.clone();
        node.beacon = canonical_label(&node.beacon);
        node.last_seen_step = node.last_seen_step.max(node.first_seen_step);
        self.beacon_index.insert(key, id.clone());
        self.states.insert(id.clone(), node);
        if self.initial.is_none() {
            self.initial = Some(id.clone());
        }
        Ok(id)
    }

    /// Records an edge; re-recording the same `(from, action, to)` is a no-op.
    pub fn record_transition(
        &mut self,
        from: &StateId,
        action: AtomicAction,
        to: &StateId,
        pre_next: Condition,
        post_current: Condition,
        step: usize,
    ) -> Result<(), FsmError> {
        for id in [from, to] {
            if !self.states.contains_key(id) {
                return Err(FsmError::UnknownState(id.clone()));
            }
        }
        let dup = self
            .transitions
            .iter()
            .any(|t| &t.from == from && &t.to == to && t.action == action);
        if !dup {
            self.transitions.push(Transition {
                from: from.clone(),
                action,
                to: to.clone(),
                pre_next,
                post_current,
                step,
            });
        }
        Ok(())
    }

    /// Success verifies a state; nothing ever un-verifies one.
    pub fn mark_verified(&mut self, id: &StateId, verdict: &Verdict) -> Result<(), FsmError> {
        let state = self.states.get_mut(id).ok_or_else(|| FsmError::UnknownState(id.clone()))?;
        if verdict.is_success() {
            state.verified = true;
        }
        Ok(())
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<(), FsmError> {
        if self.beacon_index.len() != self.states.len() {
            return Err(FsmError::Document("beacon index is not a bijection".into()));
        }
        for (key, id) in &self.beacon_index {
            let state = self.states.get(id).ok_or_else(|| FsmError::UnknownState(id.clone()))?;
            if &label_key(&state.beacon) != key {
                return Err(FsmError::Document(format!("beacon {key:?} indexes the wrong state")));
            }
        }
        for (id, state) in &self.states {
            if &state_id(&self.app, &state.beacon)? != id || &state.id != id {
                return Err(FsmError::Document(format!("state {id} does not match its beacon")));
            }
            if label_key(&state.app) != label_key(&self.app) {
                return Err(FsmError::AppMismatch { expected: self.app.clone(), got: state.app.clone() });
            }
            if state.last_seen_step < state.first_seen_step {
                return Err(FsmError::Document(format!("state {id} last seen before first seen")));
            }
        }
        for t in &self.transitions {
            for id in [&t.from, &t.to] {
                if !self.states.contains_key(id) {
                    return Err(FsmError::UnknownState(id.clone()));
                }
            }
        }
        match &self.initial {
            Some(id) if !self.states.contains_key(id) => Err(FsmError::UnknownState(id.clone())),
            None if !self.states.is_empty() => Err(FsmError::Document("missing initial state".into())),
            _ => Ok(()),
        }
    }
}

/// On-disk FSM schema (`version: 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FsmDocument {
    version: u32,
    app: String,
    initial: Option<StateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    current_goal: Option<String>,
    states: Vec<UiState>,
    transitions: Vec<Transition>,
}

impl From<AppFsm> for FsmDocument {
    fn from(fsm: AppFsm) -> Self {
        FsmDocument {
            version: FSM_SCHEMA_VERSION,
            app: fsm.app,
            initial: fsm.initial,
            current_goal: fsm.current_goal,
            states: fsm.states.into_values().collect(),
            transitions: fsm.transitions,
        }
    }
}

impl TryFrom<FsmDocument> for AppFsm {
    type Error = FsmError;

    fn try_from(doc: FsmDocument) -> Result<Self, Self::Error> {
        if doc.version != FSM_SCHEMA_VERSION {
            return Err(FsmError::Document(format!("unsupported version {}", doc.version)));
        }
        let mut fsm = AppFsm::new(&doc.app);
        for s in doc.states {
            let key = label_key(&s.beacon);
            if fsm.beacon_index.insert(key, s.id.clone()).is_some() {
                return Err(FsmError::Document(format!("duplicate beacon {:?}", s.beacon)));
            }
            fsm.states.insert(s.id.clone(), s);
        }
        fsm.transitions = doc.transitions;
        fsm.initial = doc.initial;
        fsm.current_goal = doc.current_goal;
        fsm.validate()?;
        Ok(fsm)
    }
}
