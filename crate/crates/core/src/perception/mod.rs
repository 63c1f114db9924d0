//! Screen perception: a screenshot becomes an ordered list of elements with
//! coordinates, either from a remote perception service or from the
//! ground truth the simulator embeds in its renders.

mod mock;
mod service;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use mock::{embed_ground_truth, MockPerceiver, GROUND_TRUTH_KEY};
pub use service::ServicePerceiver;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerceptionError {
    #[error("undecodable image: {0}")]
    BadImage(String),
    #[error("perception service unavailable: {0}")]
    ServiceUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    Icon,
}

/// Pixel rectangle, `left < right` and `top < bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u32; 4]", try_from = "[u32; 4]")]
pub struct Bounds {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl TryFrom<[u32; 4]> for Bounds {
    type Error = String;

    fn try_from([left, top, right, bottom]: [u32; 4]) -> Result<Self, Self::Error> {
        Bounds::new(left, top, right, bottom).ok_or_else(|| format!("bounds [{left}, {top}, {right}, {bottom}] are not well-ordered"))
    }
}

impl From<Bounds> for [u32; 4] {
    fn from(b: Bounds) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

impl Bounds {
    pub fn new(left: u32, top: u32, right: u32, bottom: u32) -> Option<Self> {
        (left < right && top < bottom).then_some(Bounds { left, top, right, bottom })
    }

    pub fn center(&self) -> (u32, u32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.left as i64 && x < self.right as i64 && y >= self.top as i64 && y < self.bottom as i64
    }

    pub fn within(&self, (w, h): (u32, u32)) -> bool {
        self.right <= w && self.bottom <= h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenElement {
    pub kind: ElementKind,
    pub content: String,
    pub bounds: Bounds,
    pub center: (u32, u32),
    pub confidence: f32,
}

impl ScreenElement {
    pub fn new(kind: ElementKind, content: impl Into<String>, bounds: Bounds) -> Self {
        ScreenElement { kind, content: content.into(), center: bounds.center(), bounds, confidence: 1.0 }
    }

    pub fn is_valid(&self) -> bool {
        let (x, y) = self.center;
        self.bounds.contains(x as i64, y as i64) && (0.0..=1.0).contains(&self.confidence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptionSource {
    Service,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub elements: Vec<ScreenElement>,
    pub screen_size: (u32, u32),
    pub source: PerceptionSource,
    /// SHA-256 of the screenshot bytes, hex.
    pub screenshot_ref: String,
}

fn reading_order(a: &ScreenElement, b: &ScreenElement) -> Ordering {
    (a.bounds.top, a.bounds.left).cmp(&(b.bounds.top, b.bounds.left))
}

pub fn image_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PerceptionResult {
    /// Sorts elements top-to-bottom, then left-to-right (stable).
    pub fn new(mut elements: Vec<ScreenElement>, screen_size: (u32, u32), source: PerceptionSource, screenshot: &[u8]) -> Self {
        elements.sort_by(reading_order);
        PerceptionResult { elements, screen_size, source, screenshot_ref: image_digest(screenshot) }
    }

    /// Digest of what was perceived (element kinds, contents and geometry).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}x{}", self.screen_size.0, self.screen_size.1));
        for e in &self.elements {
            h.update(format!("|{:?}|{}|{:?}|{:?}", e.kind, e.content, <[u32; 4]>::from(e.bounds), e.center));
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Exact (case-insensitive) content match first, then the most
    /// confident substring match.
    pub fn locate(&self, query: &str) -> Option<&ScreenElement> {
        let q = query.trim().to_lowercase();
        if q.is_empty() {
            return None;
        }
        if let Some(e) = self.elements.iter().find(|e| e.content.trim().to_lowercase() == q) {
            return Some(e);
        }
        self.elements
            .iter()
            .filter(|e| e.content.to_lowercase().contains(&q))
            .fold(None, |best: Option<&ScreenElement>, e| match best {
                Some(b) if b.confidence >= e.confidence => Some(b),
                _ => Some(e),
            })
    }

    /// One line per element, in reading order, as shown to the agents.
    pub fn listing(&self) -> String {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let kind = match e.kind {
                    ElementKind::Text => "text",
                    ElementKind::Icon => "icon",
                };
                format!("{i}. [{kind}] \"{}\" at ({}, {})", e.content, e.center.0, e.center.1)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub trait Perceiver: Send + Sync {
    fn perceive(&self, screenshot: &[u8]) -> Result<PerceptionResult, PerceptionError>;
}
