use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use super::EvalError;
use crate::condition::{Predicate, WorldFacts};
use crate::simenv::TaskSolution;

/// One rubric criterion. Plain strings are accepted and carry no predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rubric {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
}

impl<'de> Deserialize<'de> for Rubric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full {
                text: String,
                #[serde(default)]
                predicate: Option<Predicate>,
            },
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Text(text) => Rubric { text, predicate: None },
            Raw::Full { text, predicate } => Rubric { text, predicate },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    #[serde(rename = "type")]
    pub task_type: String,
    pub apps: Vec<String>,
    #[serde(default)]
    pub rubrics: Vec<Rubric>,
    #[serde(default)]
    pub human_reference_operations: Vec<String>,
    /// Criteria for choosing among candidate plans; defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_rubric: Option<String>,
}

fn schema(field: &str, detail: impl Into<String>) -> EvalError {
    EvalError::SchemaError { field: field.into(), detail: detail.into() }
}

/// Parses a task document, naming the first missing or ill-typed field.
pub fn load_task(doc: &str) -> Result<TaskSpec, EvalError> {
    let value: serde_json::Value = serde_json::from_str(doc).map_err(|e| schema("document", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| schema("document", "expected a JSON object"))?;
    for field in ["task_id", "instruction", "type", "apps"] {
        if !obj.contains_key(field) {
            return Err(schema(field, "missing"));
        }
    }
    let spec: TaskSpec = serde_json::from_value(value).map_err(|e| schema("document", e.to_string()))?;
    if spec.task_id.trim().is_empty() {
        return Err(schema("task_id", "empty"));
    }
    if spec.instruction.trim().is_empty() {
        return Err(schema("instruction", "empty"));
    }
    Ok(spec)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io { path: dir.display().to_string(), detail: e.to_string() };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|e| EvalError::Io { path: path.display().to_string(), detail: e.to_string() })
}

/// Loads `<suite>/tasks/*.json` in file-name order.
pub fn load_suite(suite: &Path) -> Result<Vec<TaskSpec>, EvalError> {
    let dir = suite.join("tasks");
    let files = json_files(&dir)?;
    let mut seen = BTreeSet::new();
    let mut tasks = Vec::with_capacity(files.len());
    for f in files {
        let task = load_task(&read(&f)?).map_err(|e| match e {
            EvalError::SchemaError { field, detail } => {
                EvalError::SchemaError { field: format!("{}: {field}", f.display()), detail }
            }
            other => other,
        })?;
        if !seen.insert(task.task_id.clone()) {
            return Err(EvalError::DuplicateTask(task.task_id));
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(EvalError::EmptySuite(dir.display().to_string()));
    }
    Ok(tasks)
}

/// Loads `<suite>/solutions/*.json`, keyed by task id.
pub fn load_solutions(suite: &Path) -> Result<BTreeMap<String, TaskSolution>, EvalError> {
    let mut out = BTreeMap::new();
    for f in json_files(&suite.join("solutions"))? {
        let sol: TaskSolution = serde_json::from_str(&read(&f)?)
            .map_err(|e| schema(&f.display().to_string(), e.to_string()))?;
        out.insert(sol.task_id.clone(), sol);
    }
    Ok(out)
}

/// Counts rubrics whose predicate holds on the final world facts (which
/// include the executed action log).
pub fn score_rubrics(facts: &WorldFacts, rubrics: &[Rubric]) -> Result<(usize, usize), EvalError> {
    let mut fulfilled = 0;
    for (i, r) in rubrics.iter().enumerate() {
        let p = r.predicate.as_ref().ok_or(EvalError::MissingPredicate(i))?;
        if p.eval(facts) {
            fulfilled += 1;
        }
    }
    Ok((fulfilled, rubrics.len()))
}
