use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    NoChange,
    Fail,
}

/// Reflection's judgement of one executed action.
///
/// `reason` is empty exactly when the outcome is `Success`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict", into = "RawVerdict")]
pub struct Verdict {
    outcome: Outcome,
    reason: String,
}

#[derive(Serialize, Deserialize)]
struct RawVerdict {
    outcome: Outcome,
    #[serde(default)]
    reason: String,
}

impl TryFrom<RawVerdict> for Verdict {
    type Error = String;

    fn try_from(raw: RawVerdict) -> Result<Self, Self::Error> {
        match raw.outcome {
            Outcome::Success => Ok(Verdict::success()),
            Outcome::NoChange => Verdict::no_change(raw.reason).ok_or_else(|| "NoChange needs a reason".into()),
            Outcome::Fail => Verdict::fail(raw.reason).ok_or_else(|| "Fail needs a reason".into()),
        }
    }
}

impl From<Verdict> for RawVerdict {
    fn from(v: Verdict) -> Self {
        RawVerdict { outcome: v.outcome, reason: v.reason }
    }
}

impl Verdict {
    pub fn success() -> Self {
        Verdict { outcome: Outcome::Success, reason: String::new() }
    }

    pub fn no_change(reason: impl Into<String>) -> Option<Self> {
        Self::failing(Outcome::NoChange, reason.into())
    }

    pub fn fail(reason: impl Into<String>) -> Option<Self> {
        Self::failing(Outcome::Fail, reason.into())
    }

    fn failing(outcome: Outcome, reason: String) -> Option<Self> {
        let reason = reason.trim().to_string();
        (!reason.is_empty()).then_some(Verdict { outcome, reason })
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.outcome {
            Outcome::Success => f.write_str("Success"),
            Outcome::NoChange => write!(f, "NoChange: {}", self.reason),
            Outcome::Fail => write!(f, "Fail: {}", self.reason),
        }
    }
}
