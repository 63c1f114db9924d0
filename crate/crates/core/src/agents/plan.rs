use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::fsm::{label_key, StateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub subtask: String,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Fresh,
    Revised,
    RecoveryFallback,
    /// No planner: the instruction itself is the only subtask.
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub items: Vec<PlanItem>,
    pub source: PlanSource,
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*])\s+(.+?)\s*$").unwrap())
}

fn rationale_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\s*\|\s*rationale\s*:\s*").unwrap())
}

impl Plan {
    /// Reads numbered or bulleted `subtask | Rationale: why` lines. `None`
    /// when no item has subtask text.
    pub fn parse(body: &str, source: PlanSource) -> Option<Plan> {
        let items: Vec<PlanItem> = body
            .lines()
            .filter_map(|l| item_re().captures(l))
            .filter_map(|c| {
                let line = c[1].to_string();
                let mut parts = rationale_re().splitn(&line, 2);
                let subtask = parts.next().unwrap_or_default().trim().to_string();
                let rationale = parts.next().unwrap_or_default().trim().to_string();
                (!subtask.is_empty()).then_some(PlanItem { subtask, rationale })
            })
            .collect();
        (!items.is_empty()).then_some(Plan { items, source })
    }

    pub fn instruction_only(instruction: &str) -> Plan {
        Plan {
            items: vec![PlanItem { subtask: instruction.trim().to_string(), rationale: String::new() }],
            source: PlanSource::Instruction,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn subtasks(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.subtask.as_str()).collect()
    }

    /// Numbered lines in the reply format.
    pub fn render(&self) -> String {
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| {
                if it.rationale.is_empty() {
                    format!("{}. {}", i + 1, it.subtask)
                } else {
                    format!("{}. {} | Rationale: {}", i + 1, it.subtask, it.rationale)
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Where a recovery plan came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoverySource {
    /// Written by the model.
    Model,
    /// The target is the current state: retry the failed subtask.
    Retry,
    /// Model output was unusable: replay the recorded path as actions.
    PathFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub thought: String,
    pub steps: Vec<String>,
    pub current_subtask: String,
    pub target: StateId,
    pub goal: String,
    pub source: RecoverySource,
}

#[derive(Deserialize)]
struct RawRecovery {
    #[serde(default)]
    thought: String,
    plan: Vec<String>,
    current_subtask: Option<String>,
    #[serde(default)]
    goal: String,
}

impl RecoveryPlan {
    /// Parses the JSON reply (the outermost `{...}` in the text). The plan
    /// must be non-empty and name a current subtask that is one of its steps.
    pub fn parse(text: &str, target: StateId) -> Result<RecoveryPlan, String> {
        let start = text.find('{').ok_or("no JSON object in reply")?;
        let end = text.rfind('}').ok_or("no JSON object in reply")?;
        let raw: RawRecovery = serde_json::from_str(&text[start..=end]).map_err(|e| e.to_string())?;
        let steps: Vec<String> = raw.plan.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if steps.is_empty() {
            return Err("empty plan".into());
        }
        let current = raw.current_subtask.ok_or("missing current_subtask")?;
        if !steps.iter().any(|s| label_key(s) == label_key(&current)) {
            return Err(format!("current_subtask {current:?} is not a plan step"));
        }
        Ok(RecoveryPlan {
            thought: raw.thought,
            steps,
            current_subtask: current.trim().to_string(),
            target,
            goal: raw.goal,
            source: RecoverySource::Model,
        })
    }
}
