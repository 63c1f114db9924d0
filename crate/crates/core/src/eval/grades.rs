//! Human grades for runs on a real handset, where rubrics have no machine
//! predicate. A grade sheet supplies SS and SR; AA, TR and RS still come
//! from the trace.
//!
//! ```json
//! {"version": 1, "grades": [
//!   {"task_id": "Web_Shopping_2_ENG", "rubrics_fulfilled": 6, "rubrics_total": 7, "success": false}
//! ]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const GRADES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGrade {
    pub task_id: String,
    pub rubrics_fulfilled: u64,
    pub rubrics_total: u64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeSheet {
    pub version: u32,
    pub grades: Vec<TaskGrade>,
}

impl GradeSheet {
    pub fn by_task(&self) -> BTreeMap<&str, &TaskGrade> {
        self.grades.iter().map(|g| (g.task_id.as_str(), g)).collect()
    }
}

fn schema(field: &str, detail: impl Into<String>) -> EvalError {
    EvalError::SchemaError { field: field.into(), detail: detail.into() }
}

/// Parses and checks a grade sheet: known version, unique task ids and
/// `rubrics_fulfilled <= rubrics_total`.
pub fn load_grades(doc: &str) -> Result<GradeSheet, EvalError> {
    let sheet: GradeSheet = serde_json::from_str(doc).map_err(|e| schema("document", e.to_string()))?;
    if sheet.version != GRADES_VERSION {
        return Err(schema("version", format!("unsupported version {}", sheet.version)));
    }
    let mut seen = std::collections::BTreeSet::new();
    for g in &sheet.grades {
        if !seen.insert(g.task_id.as_str()) {
            return Err(EvalError::DuplicateTask(g.task_id.clone()));
        }
        if g.rubrics_fulfilled > g.rubrics_total {
            return Err(schema(&format!("{}.rubrics_fulfilled", g.task_id), "exceeds rubrics_total"));
        }
    }
    Ok(sheet)
}
