use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AppFsm, FsmError, StateId};
use crate::device::AtomicAction;
use crate::verdict::Verdict;

/// One executed action, filed under the state it landed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub step: usize,
    pub app: String,
    pub state: StateId,
    pub action: AtomicAction,
    pub verdict: Verdict,
    pub verified: bool,
}

/// A hop between two apps. Per-app FSMs never hold these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossAppEdge {
    pub step: usize,
    pub from_app: String,
    pub from: StateId,
    pub action: AtomicAction,
    pub to_app: String,
    pub to: StateId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskJournal {
    pub entries: Vec<JournalEntry>,
    pub cross_app_edges: Vec<CrossAppEdge>,
}

impl TaskJournal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, entry: JournalEntry) -> Result<(), FsmError> {
        if let Some(last) = self.entries.last() {
            if entry.step <= last.step {
                return Err(FsmError::StepOrder { last: last.step, got: entry.step });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn record_cross_app(&mut self, edge: CrossAppEdge) {
        self.cross_app_edges.push(edge);
    }

    /// Most recent step at which `id` (in `app`) was landed on.
    pub fn last_step_of(&self, app: &str, id: &StateId) -> Option<usize> {
        self.entries
            .iter()
            .rev()
            .find(|e| &e.state == id && e.app.eq_ignore_ascii_case(app))
            .map(|e| e.step)
    }

    /// Checks that every referenced state exists in its app's FSM.
    pub fn validate(&self, fsms: &BTreeMap<String, AppFsm>) -> Result<(), FsmError> {
        let exists = |app: &str, id: &StateId| {
            fsms.get(app).is_some_and(|f| f.state(id).is_some())
        };
        for e in &self.entries {
            if !exists(&e.app, &e.state) {
                return Err(FsmError::UnknownState(e.state.clone()));
            }
        }
        for e in &self.cross_app_edges {
            for (app, id) in [(&e.from_app, &e.from), (&e.to_app, &e.to)] {
                if !exists(app, id) {
                    return Err(FsmError::UnknownState(id.clone()));
                }
            }
        }
        Ok(())
    }
}
