//! Action accuracy: executed actions are aligned with the human reference
//! operations by longest common subsequence, two steps matching when they
//! have the same kind and the same normalised target.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::device::{ActionKind, ActorCommand, AtomicAction};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionKey {
    pub kind: ActionKind,
    pub target: String,
}

fn normalise(target: &str) -> String {
    let cleaned: String = target
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '$' || c == '.' { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let skip = words.iter().take_while(|w| matches!(**w, "on" | "the" | "a" | "an")).count();
    words[skip..].join(" ")
}

fn strip_any<'a>(s: &'a str, prefixes: &[&str]) -> Option<&'a str> {
    prefixes.iter().find_map(|p| s.strip_prefix(p))
}

/// Reads a free-text action description (`tap 'Search'`, `open Maps app`,
/// `type 'Venice'`, `press home button`) or an action literal.
pub fn parse_action_description(desc: &str) -> ActionKey {
    let key = |kind, target: &str| ActionKey { kind, target: normalise(target) };
    if let Ok(a) = desc.trim().parse::<AtomicAction>() {
        return match a {
            AtomicAction::Tap { x, y } => key(ActionKind::Tap, &format!("{x} {y}")),
            AtomicAction::Type { text } => key(ActionKind::Type, &text),
            AtomicAction::OpenApp { name } => key(ActionKind::OpenApp, &name),
            other => key(other.kind(), ""),
        };
    }
    if let Ok(ActorCommand::TapElement(label)) = ActorCommand::parse(desc) {
        return key(ActionKind::Tap, &label);
    }
    let d = desc.trim().to_lowercase();
    let d = d.trim_end_matches('.');
    if d.contains("enter") && (d.starts_with("tap") || d.starts_with("press") || d == "enter") {
        return key(ActionKind::Enter, "");
    }
    if d.contains("home") && (d.starts_with("press") || d.starts_with("go") || d.starts_with("tap home") || d == "home") {
        return key(ActionKind::Home, "");
    }
    if d == "back" || d.starts_with("press back") || d.starts_with("go back") || d.starts_with("navigate back") {
        return key(ActionKind::Back, "");
    }
    if d.starts_with("switch app") || d.contains("app switcher") {
        return key(ActionKind::SwitchApp, "");
    }
    if d.starts_with("wait") {
        return key(ActionKind::Wait, "");
    }
    if let Some(rest) = strip_any(d, &["swipe", "scroll"]) {
        return key(ActionKind::Swipe, rest);
    }
    if let Some(rest) = strip_any(d, &["open ", "launch ", "open_app "]) {
        let rest = rest.trim().trim_end_matches(" app").trim_end_matches(" application");
        return key(ActionKind::OpenApp, rest);
    }
    if let Some(rest) = strip_any(d, &["type ", "enter text ", "input "]) {
        return key(ActionKind::Type, rest);
    }
    if let Some(rest) = strip_any(d, &["tap ", "click ", "press ", "select "]) {
        return key(ActionKind::Tap, rest);
    }
    key(ActionKind::Tap, d)
}

/// The description form used for executed actions in traces.
pub fn describe_action(action: &AtomicAction, label: Option<&str>) -> String {
    match (action, label) {
        (AtomicAction::Tap { .. }, Some(l)) => format!("tap '{l}'"),
        (AtomicAction::Tap { x, y }, None) => format!("tap ({x}, {y})"),
        (AtomicAction::Type { text }, _) => format!("type '{text}'"),
        (AtomicAction::Enter, _) => "tap enter".into(),
        (AtomicAction::Back, _) => "press back".into(),
        (AtomicAction::OpenApp { name }, _) => format!("open {name} app"),
        (AtomicAction::Swipe { x1, y1, x2, y2 }, _) => format!("swipe ({x1}, {y1}) to ({x2}, {y2})"),
        (AtomicAction::SwitchApp, _) => "switch app".into(),
        (AtomicAction::Home, _) => "press home button".into(),
        (AtomicAction::Wait, _) => "wait".into(),
    }
}

/// `(matched, total)`: LCS length under key equality, and the reference length.
pub fn action_accuracy(executed: &[String], reference: &[String]) -> Result<(usize, usize), EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let a: Vec<ActionKey> = executed.iter().map(|d| parse_action_description(d)).collect();
    let b: Vec<ActionKey> = reference.iter().map(|d| parse_action_description(d)).collect();
    let mut row = vec![0usize; b.len() + 1];
    for x in &a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    Ok((row[b.len()], b.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptions_normalise_to_keys() {
        assert_eq!(parse_action_description("open Instagram app"), parse_action_description("Open_App('Instagram')"));
        assert_eq!(parse_action_description("tap on the search bar").target, "search bar");
        assert_eq!(parse_action_description("type 'Venice, Italy'"), parse_action_description("type 'Venice Italy'"));
        assert_eq!(parse_action_description("tap enter").kind, ActionKind::Enter);
        assert_eq!(parse_action_description("press home button").kind, ActionKind::Home);
        assert_eq!(parse_action_description("scroll through accommodation options").kind, ActionKind::Swipe);
        assert_eq!(parse_action_description("Back()").kind, ActionKind::Back);
    }

    #[test]
    fn executed_descriptions_round_trip_through_the_parser() {
        let cases = [
            (AtomicAction::Tap { x: 3, y: 4 }, Some("Add to cart"), ActionKind::Tap, "add to cart"),
            (AtomicAction::Type { text: "Buy milk".into() }, None, ActionKind::Type, "buy milk"),
            (AtomicAction::OpenApp { name: "Maps".into() }, None, ActionKind::OpenApp, "maps"),
            (AtomicAction::Home, None, ActionKind::Home, ""),
            (AtomicAction::Enter, None, ActionKind::Enter, ""),
            (AtomicAction::Back, None, ActionKind::Back, ""),
            (AtomicAction::Wait, None, ActionKind::Wait, ""),
            (AtomicAction::SwitchApp, None, ActionKind::SwitchApp, ""),
        ];
        for (action, label, kind, target) in cases {
            let key = parse_action_description(&describe_action(&action, label));
            assert_eq!(key, ActionKey { kind, target: target.into() }, "{action}");
        }
    }

    #[test]
    fn lcs_tolerates_insertions() {
        let reference: Vec<String> = ["open Maps app", "tap 'Search here'", "tap enter"].map(String::from).to_vec();
        let mut executed = reference.clone();
        executed.insert(1, "press back".into());
        assert_eq!(action_accuracy(&executed, &reference), Ok((3, 3)));
        assert_eq!(action_accuracy(&executed[..2], &reference), Ok((1, 3)));
        assert_eq!(action_accuracy(&executed, &[]), Err(EvalError::EmptyReference));
    }
}
