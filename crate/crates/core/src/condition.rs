//! Pre/post-conditions. A condition is free text, optionally carrying a
//! machine predicate that the simulated world can evaluate directly.
//!
//! In text form the predicate trails the prose after an `@pred` marker:
//! `Search page is open @pred {"on_screen":{"app":"Walmart","screen":"search"}}`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device::{ActionKind, AtomicAction};

const PRED_MARKER: &str = "@pred";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    OnScreen { app: String, screen: String },
    Foreground { app: String },
    /// Some visible element's content contains `text` (case-insensitive).
    Visible { text: String },
    VarEq { var: String, value: serde_json::Value },
    VarAtLeast { var: String, value: i64 },
    Visited {
        app: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        screen: Option<String>,
    },
    Typed { text: String },
    /// Some executed action of this kind (and target, when given).
    Action {
        kind: ActionKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
    },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

/// Snapshot of the simulated world that predicates are evaluated against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldFacts {
    pub foreground_app: Option<String>,
    pub screen: Option<String>,
    pub visible: Vec<String>,
    pub vars: BTreeMap<String, serde_json::Value>,
    pub visited: Vec<(String, String)>,
    pub typed: Vec<String>,
    /// Executed actions paired with the element label a tap resolved to, if any.
    #[serde(default)]
    pub actions: Vec<(AtomicAction, Option<String>)>,
}

fn eq_ci(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

impl Predicate {
    pub fn eval(&self, facts: &WorldFacts) -> bool {
        match self {
            Predicate::OnScreen { app, screen } => {
                facts.foreground_app.as_deref().is_some_and(|a| eq_ci(a, app))
                    && facts.screen.as_deref() == Some(screen.as_str())
            }
            Predicate::Foreground { app } => {
                facts.foreground_app.as_deref().is_some_and(|a| eq_ci(a, app))
            }
            Predicate::Visible { text } => {
                let needle = text.to_lowercase();
                facts.visible.iter().any(|v| v.to_lowercase().contains(&needle))
            }
            Predicate::VarEq { var, value } => facts.vars.get(var) == Some(value),
            Predicate::VarAtLeast { var, value } => facts
                .vars
                .get(var)
                .and_then(|v| v.as_i64())
                .is_some_and(|v| v >= *value),
            Predicate::Visited { app, screen } => facts.visited.iter().any(|(a, s)| {
                eq_ci(a, app) && screen.as_ref().is_none_or(|want| want == s)
            }),
            Predicate::Typed { text } => facts.typed.iter().any(|t| eq_ci(t, text)),
            Predicate::Action { kind, target } => facts.actions.iter().any(|(a, label)| {
                a.kind() == *kind
                    && target.as_ref().is_none_or(|want| {
                        let got = match a {
                            AtomicAction::OpenApp { name } => Some(name.as_str()),
                            AtomicAction::Type { text } => Some(text.as_str()),
                            _ => label.as_deref(),
                        };
                        got.is_some_and(|g| eq_ci(g, want))
                    })
            }),
            Predicate::All(ps) => ps.iter().all(|p| p.eval(facts)),
            Predicate::Any(ps) => ps.iter().any(|p| p.eval(facts)),
            Predicate::Not(p) => !p.eval(facts),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
}

impl Condition {
    pub fn text(text: impl Into<String>) -> Self {
        Condition { text: text.into(), predicate: None }
    }

    pub fn with_predicate(text: impl Into<String>, predicate: Predicate) -> Self {
        Condition { text: text.into(), predicate: Some(predicate) }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty() && self.predicate.is_none()
    }

    /// Splits a model-authored condition into prose and an optional
    /// predicate. A marker followed by unparsable JSON is kept as prose.
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        if let Some(pos) = raw.find(PRED_MARKER) {
            let json = raw[pos + PRED_MARKER.len()..].trim();
            if let Ok(predicate) = serde_json::from_str::<Predicate>(json) {
                return Condition {
                    text: raw[..pos].trim().to_string(),
                    predicate: Some(predicate),
                };
            }
        }
        Condition::text(raw)
    }

    /// `None` when there is no predicate to evaluate.
    pub fn check(&self, facts: &WorldFacts) -> Option<bool> {
        self.predicate.as_ref().map(|p| p.eval(facts))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)?;
        if let Some(p) = &self.predicate {
            let json = serde_json::to_string(p).map_err(|_| fmt::Error)?;
            if !self.text.is_empty() {
                f.write_str(" ")?;
            }
            write!(f, "{PRED_MARKER} {json}")?;
        }
        Ok(())
    }
}
