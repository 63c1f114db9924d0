use std::fmt::Write as _;
use std::str::FromStr;

use super::{AppFsm, FsmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = FsmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(FsmError::UnsupportedFormat(other.to_string())),
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn to_dot(fsm: &AppFsm) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(fsm.app()));
    if !fsm.is_empty() {
        out.push_str("  rankdir=LR;\n");
    }
    for s in fsm.states() {
        let shape = if s.verified { "doublecircle" } else { "circle" };
        let _ = writeln!(out, "  \"{}\" [label=\"{}\", shape={shape}];", s.id, dot_escape(&s.beacon));
    }
    for t in fsm.transitions() {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\"];",
            t.from,
            t.to,
            dot_escape(&t.action.to_string())
        );
    }
    out.push_str("}\n");
    out
}

/// Renders an FSM as Graphviz DOT or as the versioned JSON document.
pub fn export_fsm(fsm: &AppFsm, format: ExportFormat) -> Result<String, FsmError> {
    match format {
        ExportFormat::Dot => Ok(to_dot(fsm)),
        ExportFormat::Json => serde_json::to_string_pretty(fsm).map_err(|e| FsmError::Document(e.to_string())),
    }
}

pub fn import_fsm_json(doc: &str) -> Result<AppFsm, FsmError> {
    serde_json::from_str(doc).map_err(|e| FsmError::Document(e.to_string()))
}
