//! Runs benchmark tasks on the simulated phone and scores them.
//!
//! Each task gets a fresh world; its fault RNG is seeded with the suite seed
//! plus the task's position, so a suite run is a pure function of the
//! world, the tasks, the model replies and the seed.

use std::path::Path;

use crate::agents::{orchestrate, AgentSettings, Agents, KnowledgeError, KnowledgeStore, RunOutcome, RunStatus, Trace};
use crate::device::SimDevice;
use crate::eval::{
    action_accuracy, compute_metrics, load_solutions, load_suite, score_rubrics, EvalError, MetricsReport, TaskGrade,
    TaskRecord, TaskSpec,
};
use crate::fsm::{export_fsm, ExportFormat};
use crate::gateway::Gateway;
use crate::perception::MockPerceiver;
use crate::simenv::{load_world, FaultEvent, FaultPolicy, OracleModel, WorldError, WorldSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}

/// One task's run and its scores.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub task: TaskSpec,
    pub outcome: RunOutcome,
    pub faults: Vec<FaultEvent>,
    pub record: TaskRecord,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub runs: Vec<TaskRun>,
    pub report: MetricsReport,
}

/// The world, tasks and per-task solutions of a suite directory.
#[derive(Debug, Clone)]
pub struct Suite {
    pub world: WorldSpec,
    pub tasks: Vec<TaskSpec>,
    pub oracle: OracleModel,
}

impl Suite {
    /// Reads `world.json`, `tasks/` and (optionally) `solutions/`.
    pub fn load(dir: &Path) -> Result<Suite, BenchError> {
        let world_path = dir.join("world.json");
        let doc = std::fs::read_to_string(&world_path)
            .map_err(|e| BenchError::Io { path: world_path.display().to_string(), detail: e.to_string() })?;
        let world = load_world(&doc)?;
        let tasks = load_suite(dir)?;
        let solutions = if dir.join("solutions").is_dir() { load_solutions(dir)? } else { Default::default() };
        let mut oracle = OracleModel::new(world.clone());
        for task in &tasks {
            if let Some(sol) = solutions.get(&task.task_id) {
                oracle = oracle.with_task(&task.instruction, sol.clone());
            }
        }
        Ok(Suite { world, tasks, oracle })
    }
}

/// Sim-mode success: the run ended in success and every rubric holds in the
/// final world state.
pub fn run_task(
    task: &TaskSpec,
    world: &WorldSpec,
    policy: FaultPolicy,
    gateway: &Gateway,
    settings: &AgentSettings,
    store: Option<&KnowledgeStore>,
) -> Result<TaskRun, BenchError> {
    let knowledge = match store {
        Some(store) => store.load()?,
        None => Default::default(),
    };
    let agents = Agents::new(gateway, settings.clone());
    let mut device = SimDevice::new(world.clone(), policy);
    let outcome = orchestrate(task, &knowledge, &agents, &mut device, &MockPerceiver);
    if let (Some(store), Some(delta)) = (store, outcome.knowledge_delta.clone()) {
        store.merge(delta)?;
    }
    let facts = outcome.final_facts.clone().unwrap_or_default();
    let (fulfilled, total) = score_rubrics(&facts, &task.rubrics)?;
    let (matched, reference) = action_accuracy(&outcome.trace.action_descriptions(), &task.human_reference_operations)?;
    let summary = &outcome.trace.summary;
    let record = TaskRecord {
        task_id: task.task_id.clone(),
        success: summary.status == RunStatus::Success && fulfilled == total,
        terminated: summary.status == RunStatus::Terminated,
        rubrics_fulfilled: fulfilled as u64,
        rubrics_total: total as u64,
        actions_matched: matched as u64,
        actions_reference: reference as u64,
        failed_subtasks: summary.failed_subtasks as u64,
        recovered_subtasks: summary.recovered_subtasks as u64,
    };
    Ok(TaskRun { task: task.clone(), faults: device.world().faults().to_vec(), outcome, record })
}

/// Scores a recorded run with human grades for SS and SR.
pub fn graded_record(task: &TaskSpec, trace: &Trace, grade: &TaskGrade) -> Result<TaskRecord, EvalError> {
    let (matched, reference) = action_accuracy(&trace.action_descriptions(), &task.human_reference_operations)?;
    let summary = &trace.summary;
    Ok(TaskRecord {
        task_id: task.task_id.clone(),
        success: grade.success,
        terminated: summary.status == RunStatus::Terminated,
        rubrics_fulfilled: grade.rubrics_fulfilled,
        rubrics_total: grade.rubrics_total,
        actions_matched: matched as u64,
        actions_reference: reference as u64,
        failed_subtasks: summary.failed_subtasks as u64,
        recovered_subtasks: summary.recovered_subtasks as u64,
    })
}

pub fn run_suite(
    tasks: &[TaskSpec],
    world: &WorldSpec,
    policy: FaultPolicy,
    gateway: &Gateway,
    settings: &AgentSettings,
    store: Option<&KnowledgeStore>,
) -> Result<SuiteRun, BenchError> {
    let mut runs = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let task_policy = FaultPolicy { seed: policy.seed.wrapping_add(i as u64), ..policy };
        runs.push(run_task(task, world, task_policy, gateway, settings, store)?);
    }
    let records: Vec<TaskRecord> = runs.iter().map(|r| r.record.clone()).collect();
    Ok(SuiteRun { report: compute_metrics(&records), runs })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io { path: path.display().to_string(), detail: e.to_string() }
}

fn write(path: &Path, contents: &str) -> Result<(), BenchError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Directory layout of one run: `trace.jsonl`, `summary.json`,
/// `journal.json` and `fsm/<app>.{json,dot}`.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<(), BenchError> {
    outcome.trace.write_to(dir).map_err(|e| io_err(dir, e))?;
    let journal = serde_json::to_string_pretty(&outcome.journal).map_err(|e| io_err(dir, e))?;
    write(&dir.join("journal.json"), &(journal + "\n"))?;
    let fsm_dir = dir.join(FSM_DIR);
    std::fs::create_dir_all(&fsm_dir).map_err(|e| io_err(&fsm_dir, e))?;
    for (app, fsm) in &outcome.fsms {
        for (format, ext) in [(ExportFormat::Json, "json"), (ExportFormat::Dot, "dot")] {
            let doc = export_fsm(fsm, format).map_err(|e| io_err(&fsm_dir, e))?;
            write(&fsm_dir.join(format!("{}.{ext}", fsm_file_stem(app))), &doc)?;
        }
    }
    Ok(())
}

pub const FSM_DIR: &str = "fsm";

/// File name stem for an app's FSM export.
pub fn fsm_file_stem(app: &str) -> String {
    app.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `metrics.txt`, `metrics.csv` and `metrics.json`.
pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(&dir.join("metrics.txt"), &report.to_text())?;
    write(&dir.join("metrics.csv"), &report.to_csv())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| io_err(dir, e))?;
    write(&dir.join("metrics.json"), &(json + "\n"))
}

impl TaskRun {
    /// The run directory plus the fault log and single-task metrics.
    pub fn write_to(&self, dir: &Path) -> Result<(), BenchError> {
        write_outcome(dir, &self.outcome)?;
        let faults = serde_json::to_string_pretty(&self.faults).map_err(|e| io_err(dir, e))?;
        write(&dir.join("faults.json"), &(faults + "\n"))?;
        write_report(dir, &compute_metrics(std::slice::from_ref(&self.record)))
    }
}
