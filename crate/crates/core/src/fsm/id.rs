use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FsmError;

/// Trims and collapses internal whitespace, keeping the original casing.
pub fn canonical_label(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The dedup key: canonical label, case-folded.
pub fn label_key(raw: &str) -> String {
    canonical_label(raw).to_lowercase()
}

/// 128-bit screen identity rendered as 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StateId(String);

impl StateId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for StateId {
    type Error = FsmError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let ok = value.len() == 32 && value.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(StateId(value))
        } else {
            Err(FsmError::MalformedId(value))
        }
    }
}

impl From<StateId> for String {
    fn from(id: StateId) -> Self {
        id.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Digest of the canonical `(app, beacon)` pair.
pub fn state_id(app: &str, beacon: &str) -> Result<StateId, FsmError> {
    let app = label_key(app);
    let beacon = label_key(beacon);
    if app.is_empty() {
        return Err(FsmError::EmptyKey("app"));
    }
    if beacon.is_empty() {
        return Err(FsmError::EmptyKey("beacon"));
    }
    let mut hasher = Sha256::new();
    // length prefix: no (app, beacon) split of the same bytes can collide
    hasher.update((app.len() as u64).to_le_bytes());
    hasher.update(app.as_bytes());
    hasher.update(beacon.as_bytes());
    let digest = hasher.finalize();
    Ok(StateId(hex::encode(&digest[..16])))
}
