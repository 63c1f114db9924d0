//! The Actor's toolbox: nine atomic actions and their literal syntax.
//!
//! Literals look like `Tap(120, 340)`, `Type('laptop')`, `Open_App('Maps')`.
//! The same syntax is used in model replies, trace records and stored
//! action sequences.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomicAction {
    Tap { x: i32, y: i32 },
    Type { text: String },
    Enter,
    Back,
    OpenApp { name: String },
    Swipe { x1: i32, y1: i32, x2: i32, y2: i32 },
    SwitchApp,
    Home,
    Wait,
}

impl AtomicAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            AtomicAction::Tap { .. } => ActionKind::Tap,
            AtomicAction::Type { .. } => ActionKind::Type,
            AtomicAction::Enter => ActionKind::Enter,
            AtomicAction::Back => ActionKind::Back,
            AtomicAction::OpenApp { .. } => ActionKind::OpenApp,
            AtomicAction::Swipe { .. } => ActionKind::Swipe,
            AtomicAction::SwitchApp => ActionKind::SwitchApp,
            AtomicAction::Home => ActionKind::Home,
            AtomicAction::Wait => ActionKind::Wait,
        }
    }

    /// Checks the structural invariants: non-negative coordinates and
    /// non-empty text arguments.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            AtomicAction::Tap { x, y } if *x < 0 || *y < 0 => {
                Err(format!("negative tap coordinates ({x}, {y})"))
            }
            AtomicAction::Swipe { x1, y1, x2, y2 } if [x1, y1, x2, y2].iter().any(|v| **v < 0) => {
                Err(format!("negative swipe coordinates ({x1}, {y1}, {x2}, {y2})"))
            }
            AtomicAction::Type { text } if text.is_empty() => Err("empty Type text".into()),
            AtomicAction::OpenApp { name } if name.trim().is_empty() => {
                Err("empty Open_App name".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Tap,
    Type,
    Enter,
    Back,
    OpenApp,
    Swipe,
    SwitchApp,
    Home,
    Wait,
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

impl fmt::Display for AtomicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicAction::Tap { x, y } => write!(f, "Tap({x}, {y})"),
            AtomicAction::Type { text } => write!(f, "Type({})", quote(text)),
            AtomicAction::Enter => f.write_str("Enter()"),
            AtomicAction::Back => f.write_str("Back()"),
            AtomicAction::OpenApp { name } => write!(f, "Open_App({})", quote(name)),
            AtomicAction::Swipe { x1, y1, x2, y2 } => write!(f, "Swipe({x1}, {y1}, {x2}, {y2})"),
            AtomicAction::SwitchApp => f.write_str("Switch_App()"),
            AtomicAction::Home => f.write_str("Home()"),
            AtomicAction::Wait => f.write_str("Wait()"),
        }
    }
}

/// What the Actor asked for. Taps may name an on-screen element instead of
/// raw coordinates; those are resolved against the perception result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActorCommand {
    Act(AtomicAction),
    TapElement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse action literal: {0}")]
pub struct ActionParseError(pub String);

fn literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?i)\b(tap|type|enter|back|open_app|openapp|swipe|switch_app|switchapp|home|wait)\s*\(((?:'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*"|[^()'"])*)\)"#,
        )
            .unwrap()
    })
}

fn unquote(arg: &str) -> Option<String> {
    let arg = arg.trim();
    let bytes = arg.as_bytes();
    if arg.len() >= 2 {
        let (first, last) = (bytes[0], bytes[arg.len() - 1]);
        if (first == b'\'' || first == b'"') && first == last {
            let inner = &arg[1..arg.len() - 1];
            let mut out = String::with_capacity(inner.len());
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                if c == '\\' {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                } else {
                    out.push(c);
                }
            }
            return Some(out);
        }
    }
    None
}

fn ints(args: &str) -> Option<Vec<i32>> {
    args.split(',').map(|a| a.trim().parse::<i32>().ok()).collect()
}

impl ActorCommand {
    /// Parses the last action literal found in `text`.
    pub fn parse(text: &str) -> Result<ActorCommand, ActionParseError> {
        let caps = literal_re()
            .captures_iter(text)
            .last()
            .ok_or_else(|| ActionParseError(text.trim().chars().take(80).collect()))?;
        let name = caps[1].to_ascii_lowercase();
        let args = caps[2].trim();
        let bad = || ActionParseError(caps[0].to_string());
        let cmd = match name.as_str() {
            "tap" => {
                if let Some(label) = unquote(args) {
                    ActorCommand::TapElement(label)
                } else {
                    match ints(args).as_deref() {
                        Some([x, y]) => ActorCommand::Act(AtomicAction::Tap { x: *x, y: *y }),
                        _ => return Err(bad()),
                    }
                }
            }
            "type" => ActorCommand::Act(AtomicAction::Type {
                text: unquote(args).ok_or_else(bad)?,
            }),
            "open_app" | "openapp" => ActorCommand::Act(AtomicAction::OpenApp {
                name: unquote(args).ok_or_else(bad)?,
            }),
            "swipe" => match ints(args).as_deref() {
                Some([x1, y1, x2, y2]) => ActorCommand::Act(AtomicAction::Swipe {
                    x1: *x1,
                    y1: *y1,
                    x2: *x2,
                    y2: *y2,
                }),
                _ => return Err(bad()),
            },
            _ if !args.is_empty() => return Err(bad()),
            "enter" => ActorCommand::Act(AtomicAction::Enter),
            "back" => ActorCommand::Act(AtomicAction::Back),
            "switch_app" | "switchapp" => ActorCommand::Act(AtomicAction::SwitchApp),
            "home" => ActorCommand::Act(AtomicAction::Home),
            "wait" => ActorCommand::Act(AtomicAction::Wait),
            _ => return Err(bad()),
        };
        Ok(cmd)
    }
}

impl std::str::FromStr for AtomicAction {
    type Err = ActionParseError;

    /// Parses a literal with concrete arguments; element-named taps are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match ActorCommand::parse(s)? {
            ActorCommand::Act(a) => Ok(a),
            ActorCommand::TapElement(label) => Err(ActionParseError(format!("Tap('{label}')"))),
        }
    }
}
