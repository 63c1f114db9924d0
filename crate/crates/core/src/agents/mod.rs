//! The five reasoning agents and the loop that drives them.
//!
//! Planner, State Agent, Actor, Reflection and Mentor are thin prompt/parse
//! wrappers around the model gateway ([`Agents`]); the [`orchestrator`]
//! wires them to the FSMs, the perceiver and the device.

pub mod knowledge;
mod ops;
pub mod orchestrator;
mod plan;
pub mod prompts;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::device::ActionParseError;
use crate::fsm::FsmError;
use crate::gateway::{GatewayError, MalformedResponse};

pub use knowledge::{ActionSequence, GuidanceCue, KnowledgeBase, KnowledgeError, KnowledgeStore, KNOWLEDGE_SCHEMA_VERSION};
pub use ops::{path_fallback, tags, Agents, Decision, StateReading, TaskContext, VerifyInput, DEFAULT_RUBRIC};
pub use orchestrator::{orchestrate, RunOutcome};
pub use plan::{Plan, PlanItem, PlanSource, RecoveryPlan, RecoverySource};
pub use trace::{RecoveryRound, RunStatus, StepMode, StepRecord, Trace, TraceSummary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("empty instruction")]
    EmptyInstruction,
    #[error("no candidate plan could be parsed")]
    AllCandidatesMalformed,
    #[error("unparsable judgment: {0}")]
    UnparsableJudgment(String),
    #[error(transparent)]
    Malformed(#[from] MalformedResponse),
    #[error("no action parsed: {0}")]
    NoActionParsed(String),
    #[error("element {0:?} is not on the screen")]
    ElementNotFound(String),
    #[error("unparsable verdict: {0}")]
    UnparsableVerdict(String),
    #[error("unparsable recovery plan: {0}")]
    UnparsableRecovery(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Fsm(#[from] FsmError),
}

impl From<ActionParseError> for AgentError {
    fn from(e: ActionParseError) -> Self {
        AgentError::NoActionParsed(e.0)
    }
}

/// The four component switches, one per row of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// No Planner: the instruction itself is the only subtask.
    NoPlanner,
    /// One candidate plan, no judge.
    SinglePlan,
    /// No pre/post-conditions in prompts or FSM nodes.
    NoConditions,
    /// No Mentor: nothing is written to the knowledge store.
    NoMentor,
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no-planner" => Ok(Ablation::NoPlanner),
            "single-plan" => Ok(Ablation::SinglePlan),
            "no-conditions" => Ok(Ablation::NoConditions),
            "no-mentor" => Ok(Ablation::NoMentor),
            other => Err(format!("unknown ablation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSettings {
    pub planner: bool,
    pub multi_plan: bool,
    pub conditions: bool,
    pub mentor: bool,
    /// Candidate plans per planning round when `multi_plan` is on.
    pub candidates: usize,
    pub candidate_temperature: f32,
    pub step_budget: usize,
    pub max_replans: usize,
    /// Consecutive failed recovery steps that trigger a revised plan.
    pub recovery_failures_before_replan: usize,
    /// Evaluate condition predicates against device facts before asking
    /// the model (simulated devices only).
    pub mechanical_checks: bool,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            planner: true,
            multi_plan: true,
            conditions: true,
            mentor: true,
            candidates: 5,
            candidate_temperature: 0.7,
            step_budget: 40,
            max_replans: 2,
            recovery_failures_before_replan: 2,
            mechanical_checks: true,
        }
    }
}

impl AgentSettings {
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::NoPlanner => self.planner = false,
            Ablation::SinglePlan => self.multi_plan = false,
            Ablation::NoConditions => self.conditions = false,
            Ablation::NoMentor => self.mentor = false,
        }
        self
    }

    pub fn candidate_count(&self) -> usize {
        if self.multi_plan { self.candidates.max(1) } else { 1 }
    }
}
