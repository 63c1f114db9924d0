//! The run record: one [`StepRecord`] per executed action, written as JSON
//! lines, plus a [`TraceSummary`] document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::{Plan, RecoverySource};
use crate::device::AtomicAction;
use crate::fsm::StateId;
use crate::verdict::Verdict;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Terminated,
    BudgetExhausted,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Terminated => "terminated",
            RunStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Main,
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0-based index among executed actions.
    pub step: usize,
    pub mode: StepMode,
    pub subtask: String,
    pub app_before: String,
    pub state_before: StateId,
    pub perception_before: String,
    pub action: AtomicAction,
    /// Element the tap was aimed at, when the Actor named or hit one.
    pub action_label: Option<String>,
    /// Normalized description used for action accuracy.
    pub action_description: String,
    pub app_after: String,
    pub state_after: StateId,
    pub perception_after: String,
    pub verdict: Verdict,
    pub screenshot_before: String,
    pub screenshot_after: String,
    /// Device clock, milliseconds.
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRound {
    /// Step whose failure opened the round.
    pub opened_at: usize,
    pub failed_subtask: String,
    pub reason: String,
    pub target: StateId,
    pub target_beacon: String,
    /// Whether the target was verified when it was chosen.
    pub target_verified: bool,
    pub source: RecoverySource,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub task_id: String,
    pub instruction: String,
    pub status: RunStatus,
    pub steps: usize,
    /// The initial plan followed by every revised plan.
    pub plans: Vec<Plan>,
    pub replans: usize,
    pub recovery_rounds: Vec<RecoveryRound>,
    /// Failures that opened a recovery round.
    pub failed_subtasks: usize,
    /// Of those, how many were followed by the subtask succeeding before
    /// any replan.
    pub recovered_subtasks: usize,
    pub completed_subtasks: Vec<String>,
    pub final_beacon: String,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    /// One JSON document per line, in step order.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("step records serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(records: &str, summary: &str) -> Result<Trace, serde_json::Error> {
        let records = records
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<StepRecord>, _>>()?;
        Ok(Trace { records, summary: serde_json::from_str(summary)? })
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(TRACE_FILE), self.to_jsonl())?;
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        fs::write(dir.join(SUMMARY_FILE), summary + "\n")
    }

    pub fn read_from(dir: &Path) -> std::io::Result<Trace> {
        let records = fs::read_to_string(dir.join(TRACE_FILE))?;
        let summary = fs::read_to_string(dir.join(SUMMARY_FILE))?;
        Trace::from_jsonl(&records, &summary).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Executed action descriptions, for action accuracy.
    pub fn action_descriptions(&self) -> Vec<String> {
        self.records.iter().map(|r| r.action_description.clone()).collect()
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.records.iter().map(|r| &r.verdict)
    }
}
