//! Record/replay archive: a directory of JSON files, one per request key.
//!
//! ```json
//! {"version": 1, "tag": "actor", "digest": "<32 hex>", "text": "...", "backend": "scripted"}
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GatewayError, ModelBackend, ModelRequest, ModelResponse, ReplayKey};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub version: u32,
    pub tag: String,
    pub digest: String,
    pub text: String,
    pub backend: String,
}

fn file_name(key: &ReplayKey) -> String {
    let tag: String = key
        .tag
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{tag}__{}.json", key.digest)
}

/// Serves archived responses; never reaches a live model.
pub struct ReplayBackend {
    entries: HashMap<ReplayKey, ArchiveEntry>,
}

impl ReplayBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref();
        let listing = fs::read_dir(dir).map_err(|e| GatewayError::Archive(format!("{}: {e}", dir.display())))?;
        let mut entries = HashMap::new();
        for item in listing {
            let path = item.map_err(|e| GatewayError::Archive(e.to_string()))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let raw = fs::read_to_string(&path).map_err(|e| GatewayError::Archive(format!("{}: {e}", path.display())))?;
            let entry: ArchiveEntry =
                serde_json::from_str(&raw).map_err(|e| GatewayError::Archive(format!("{}: {e}", path.display())))?;
            if entry.version != ARCHIVE_VERSION {
                return Err(GatewayError::Archive(format!("{}: unsupported version {}", path.display(), entry.version)));
            }
            entries.insert(ReplayKey { tag: entry.tag.clone(), digest: entry.digest.clone() }, entry);
        }
        Ok(ReplayBackend { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ModelBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let key = req.replay_key();
        let entry = self.entries.get(&key).ok_or(GatewayError::ReplayMiss(key))?;
        Ok(ModelResponse {
            text: entry.text.clone(),
            backend: "replay".into(),
            latency: Duration::ZERO,
            usage: None,
        })
    }
}

/// Passes requests through to `inner` and archives every successful reply.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ModelBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Archive(format!("{}: {e}", dir.display())))?;
        Ok(RecordingBackend { inner, dir })
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let resp = self.inner.complete(req)?;
        let key = req.replay_key();
        let entry = ArchiveEntry {
            version: ARCHIVE_VERSION,
            tag: key.tag.clone(),
            digest: key.digest.clone(),
            text: resp.text.clone(),
            backend: resp.backend.clone(),
        };
        let path = self.dir.join(file_name(&key));
        let json = serde_json::to_string_pretty(&entry).map_err(|e| GatewayError::Archive(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| GatewayError::Archive(format!("{}: {e}", path.display())))?;
        Ok(resp)
    }
}
