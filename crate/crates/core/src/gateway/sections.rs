//! Sectioned replies: bodies introduced by `### Title ###` header lines.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed response: missing sections {missing:?}")]
pub struct MalformedResponse {
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionedResponse {
    sections: BTreeMap<String, String>,
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*###\s*(.+?)\s*###\s*$").unwrap())
}

fn norm(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SectionedResponse {
    pub fn from_map(sections: BTreeMap<String, String>) -> Self {
        SectionedResponse { sections }
    }

    /// Case-insensitive lookup by title.
    pub fn get(&self, title: &str) -> Option<&str> {
        let want = norm(title);
        self.sections
            .iter()
            .find(|(k, _)| norm(k) == want)
            .map(|(_, v)| v.as_str())
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.sections
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }
}

/// Splits `text` on header lines. Text before the first header is dropped;
/// a repeated header keeps its first body.
pub fn parse_sections(text: &str, required: &[&str]) -> Result<SectionedResponse, MalformedResponse> {
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    let flush = |cur: Option<(String, Vec<&str>)>, sections: &mut BTreeMap<String, String>| {
        if let Some((title, lines)) = cur {
            let body = lines.join("\n").trim().to_string();
            sections.entry(title).or_insert(body);
        }
    };
    for line in text.lines() {
        if let Some(c) = header_re().captures(line) {
            flush(current.take(), &mut sections);
            current = Some((c[1].to_string(), Vec::new()));
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        }
    }
    flush(current.take(), &mut sections);

    let parsed = SectionedResponse { sections };
    let missing: Vec<String> = required
        .iter()
        .filter(|r| parsed.get(r).is_none())
        .map(|r| r.to_string())
        .collect();
    if missing.is_empty() {
        Ok(parsed)
    } else {
        Err(MalformedResponse { missing })
    }
}

/// Inverse of [`parse_sections`] for bodies that contain no header lines.
pub fn serialize_sections(sections: &SectionedResponse) -> String {
    sections
        .sections
        .iter()
        .map(|(k, v)| format!("### {k} ###\n{v}\n"))
        .collect::<Vec<_>>()
        .join("\n")
}
