//! Benchmark tasks and the five run metrics: satisfaction score (SS),
//! action accuracy (AA), termination rate (TR), success rate (SR) and
//! recovery success (RS).

mod accuracy;
mod grades;
mod metrics;
mod task;

pub use accuracy::{action_accuracy, describe_action, parse_action_description, ActionKey};
pub use grades::{load_grades, GradeSheet, TaskGrade, GRADES_VERSION};
pub use metrics::{compute_metrics, MetricSet, MetricValue, MetricsReport, Ratio, TaskMetrics, TaskRecord};
pub use task::{load_solutions, load_suite, load_task, score_rubrics, Rubric, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("schema error at {field}: {detail}")]
    SchemaError { field: String, detail: String },
    #[error("rubric {0} has no machine predicate")]
    MissingPredicate(usize),
    #[error("reference action list is empty")]
    EmptyReference,
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("no task documents in {0}")]
    EmptySuite(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}
