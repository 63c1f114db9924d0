//! Knowledge retained across tasks: guidance cues, precondition-annotated
//! action sequences and the per-app FSMs, stored as one JSON document.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::device::AtomicAction;
use crate::fsm::{label_key, AppFsm};

pub const KNOWLEDGE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceCue {
    pub text: String,
    #[serde(default)]
    pub apps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub label: String,
    pub precondition: String,
    pub actions: Vec<AtomicAction>,
    #[serde(default)]
    pub apps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub version: u32,
    #[serde(default)]
    pub guidance_cues: Vec<GuidanceCue>,
    #[serde(default)]
    pub action_sequences: Vec<ActionSequence>,
    /// Stored FSMs keyed by app; validated on load.
    #[serde(default)]
    pub fsms: BTreeMap<String, AppFsm>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase {
            version: KNOWLEDGE_SCHEMA_VERSION,
            guidance_cues: Vec::new(),
            action_sequences: Vec::new(),
            fsms: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("invalid knowledge document: {0}")]
    Document(String),
}

fn intersects(apps: &[String], wanted: &[String]) -> bool {
    apps.iter().any(|a| wanted.iter().any(|w| label_key(a) == label_key(w)))
}

impl KnowledgeBase {
    pub fn is_empty(&self) -> bool {
        self.guidance_cues.is_empty() && self.action_sequences.is_empty() && self.fsms.is_empty()
    }

    /// The part relevant to a task: entries whose apps intersect `apps`.
    pub fn select(&self, apps: &[String]) -> KnowledgeBase {
        KnowledgeBase {
            version: self.version,
            guidance_cues: self.guidance_cues.iter().filter(|c| intersects(&c.apps, apps)).cloned().collect(),
            action_sequences: self.action_sequences.iter().filter(|s| intersects(&s.apps, apps)).cloned().collect(),
            fsms: self
                .fsms
                .iter()
                .filter(|(app, _)| intersects(std::slice::from_ref(*app), apps))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Adds `delta`: cues deduplicated by text, sequences by label and
    /// actions, FSMs replaced by the newer version.
    pub fn merge(&mut self, delta: KnowledgeBase) {
        for cue in delta.guidance_cues {
            match self.guidance_cues.iter_mut().find(|c| label_key(&c.text) == label_key(&cue.text)) {
                Some(existing) => {
                    for app in cue.apps {
                        if !existing.apps.iter().any(|a| label_key(a) == label_key(&app)) {
                            existing.apps.push(app);
                        }
                    }
                }
                None => self.guidance_cues.push(cue),
            }
        }
        for seq in delta.action_sequences {
            if !self.action_sequences.iter().any(|s| label_key(&s.label) == label_key(&seq.label) && s.actions == seq.actions) {
                self.action_sequences.push(seq);
            }
        }
        self.fsms.extend(delta.fsms);
    }

    pub fn summary(&self) -> String {
        format!("{} cues, {} sequences, {} fsms", self.guidance_cues.len(), self.action_sequences.len(), self.fsms.len())
    }

    /// The `### Knowledge ###` prompt block, or an empty string.
    pub fn prompt_block(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let mut out = String::from("\n### Knowledge ###\n");
        if !self.guidance_cues.is_empty() {
            out.push_str("Guidance cues:\n");
            for c in &self.guidance_cues {
                out.push_str(&format!("- {}\n", c.text));
            }
        }
        if !self.action_sequences.is_empty() {
            out.push_str("Action sequences:\n");
            for s in &self.action_sequences {
                let acts: Vec<String> = s.actions.iter().map(|a| a.to_string()).collect();
                out.push_str(&format!("- {} (when: {}): {}\n", s.label, s.precondition, acts.join("; ")));
            }
        }
        if !self.fsms.is_empty() {
            out.push_str("Known screens:\n");
            for (app, fsm) in &self.fsms {
                let beacons: Vec<&str> = fsm.states().map(|s| s.beacon.as_str()).collect();
                out.push_str(&format!("- {app}: {}\n", beacons.join("; ")));
            }
        }
        out
    }
}

/// The persistent store: one JSON file, one writer at a time.
#[derive(Debug)]
pub struct KnowledgeStore {
    path: PathBuf,
    lock: RwLock<()>,
}

impl KnowledgeStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        KnowledgeStore { path: path.into(), lock: RwLock::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, e: std::io::Error) -> KnowledgeError {
        KnowledgeError::Io { path: self.path.display().to_string(), detail: e.to_string() }
    }

    fn read(&self) -> Result<KnowledgeBase, KnowledgeError> {
        match fs::read_to_string(&self.path) {
            Ok(doc) => {
                let kb: KnowledgeBase = serde_json::from_str(&doc).map_err(|e| KnowledgeError::Document(e.to_string()))?;
                if kb.version != KNOWLEDGE_SCHEMA_VERSION {
                    return Err(KnowledgeError::Document(format!("unsupported version {}", kb.version)));
                }
                Ok(kb)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(KnowledgeBase::default()),
            Err(e) => Err(self.io(e)),
        }
    }

    fn write(&self, kb: &KnowledgeBase) -> Result<(), KnowledgeError> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| self.io(e))?;
        }
        let tmp = self.path.with_extension("json.tmp");
        let doc = serde_json::to_string_pretty(kb).map_err(|e| KnowledgeError::Document(e.to_string()))?;
        fs::write(&tmp, doc + "\n").map_err(|e| self.io(e))?;
        fs::rename(&tmp, &self.path).map_err(|e| self.io(e))
    }

    /// A missing file reads as an empty knowledge base.
    pub fn load(&self) -> Result<KnowledgeBase, KnowledgeError> {
        let _guard = self.lock.read().unwrap_or_else(|e| e.into_inner());
        self.read()
    }

    pub fn merge(&self, delta: KnowledgeBase) -> Result<KnowledgeBase, KnowledgeError> {
        let _guard = self.lock.write().unwrap_or_else(|e| e.into_inner());
        let mut kb = self.read()?;
        kb.merge(delta);
        self.write(&kb)?;
        Ok(kb)
    }

    pub fn clear(&self) -> Result<(), KnowledgeError> {
        let _guard = self.lock.write().unwrap_or_else(|e| e.into_inner());
        self.write(&KnowledgeBase::default())
    }
}
