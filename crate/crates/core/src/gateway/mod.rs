//! Backend-agnostic model access.
//!
//! Every agent talks to a [`Gateway`], which fronts one [`ModelBackend`]
//! (plus optional per-agent overrides), retries transient transport
//! failures, fans out concurrent requests and keeps an ordered transcript
//! of everything it was asked.

mod live;
mod replay;
mod scripted;
mod sections;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use live::{LiveBackend, Provider};
pub use replay::{ArchiveEntry, RecordingBackend, ReplayBackend, ARCHIVE_VERSION};
pub use scripted::{CannedBackend, ScriptedBackend};
pub use sections::{parse_sections, serialize_sections, MalformedResponse, SectionedResponse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("replay archive has no entry for {0}")]
    ReplayMiss(ReplayKey),
    #[error("missing credentials: set {0}")]
    AuthMissing(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected backend reply: {0}")]
    BadReply(String),
    #[error("archive error: {0}")]
    Archive(String),
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

mod b64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image {
        media_type: String,
        #[serde(with = "b64")]
        data: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message { role: Role::User, parts: vec![Part::Text { text: text.into() }] }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Message { role: Role::System, parts: vec![Part::Text { text: text.into() }] }
    }

    pub fn with_image(mut self, media_type: &str, data: Vec<u8>) -> Self {
        self.parts.push(Part::Image { media_type: media_type.into(), data });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub tag: String,
    pub max_output: u32,
}

/// Replay archive key: the request tag plus a digest of its content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReplayKey {
    pub tag: String,
    pub digest: String,
}

impl std::fmt::Display for ReplayKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.tag, self.digest)
    }
}

pub const DEFAULT_MAX_OUTPUT: u32 = 1024;

impl ModelRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<Message>, temperature: f32) -> Self {
        ModelRequest { messages, temperature, tag: tag.into(), max_output: DEFAULT_MAX_OUTPUT }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        let empty_image = self
            .messages
            .iter()
            .flat_map(|m| &m.parts)
            .any(|p| matches!(p, Part::Image { data, .. } if data.is_empty()));
        if empty_image {
            return Err(GatewayError::InvalidRequest("empty image part".into()));
        }
        Ok(())
    }

    /// All text parts, joined by blank lines.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Digest of the canonicalized content (messages, sampling settings).
    /// Images contribute their own SHA-256 rather than raw bytes.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |label: &str, bytes: &[u8]| {
            h.update(label.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        for m in &self.messages {
            field("role", format!("{:?}", m.role).as_bytes());
            for p in &m.parts {
                match p {
                    Part::Text { text } => field("text", text.as_bytes()),
                    Part::Image { media_type, data } => {
                        field("image", media_type.as_bytes());
                        field("image-sha256", &Sha256::digest(data));
                    }
                }
            }
        }
        field("temperature", format!("{:.3}", self.temperature).as_bytes());
        field("max_output", &self.max_output.to_le_bytes());
        hex::encode(&h.finalize()[..16])
    }

    pub fn replay_key(&self) -> ReplayKey {
        ReplayKey { tag: self.tag.clone(), digest: self.content_digest() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub backend: String,
    pub latency: Duration,
    pub usage: Option<Usage>,
}

pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

/// One request as the gateway saw it, in issue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub tag: String,
    pub digest: String,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 5;

pub struct Gateway {
    backend: Box<dyn ModelBackend>,
    overrides: BTreeMap<String, Box<dyn ModelBackend>>,
    retry: RetryPolicy,
    max_in_flight: usize,
    sleeper: Sleeper,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl Gateway {
    pub fn new(backend: impl ModelBackend + 'static) -> Self {
        Gateway {
            backend: Box::new(backend),
            overrides: BTreeMap::new(),
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            sleeper: Arc::new(std::thread::sleep),
            transcript: Mutex::new(Vec::new()),
        }
    }

    /// Routes requests whose tag starts with `tag_prefix` to `backend`.
    pub fn with_override(mut self, tag_prefix: &str, backend: impl ModelBackend + 'static) -> Self {
        self.overrides.insert(tag_prefix.to_string(), Box::new(backend));
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    fn route(&self, tag: &str) -> &dyn ModelBackend {
        self.overrides
            .iter()
            .filter(|(prefix, _)| tag.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, b)| b.as_ref())
            .unwrap_or(self.backend.as_ref())
    }

    fn open_entry(&self, req: &ModelRequest) -> usize {
        let mut t = self.transcript.lock().unwrap();
        let index = t.len();
        t.push(TranscriptEntry {
            index,
            tag: req.tag.clone(),
            digest: req.content_digest(),
            prompt: req.text(),
            response: None,
            error: None,
        });
        index
    }

    fn close_entry(&self, index: usize, result: &Result<ModelResponse, GatewayError>) {
        let mut t = self.transcript.lock().unwrap();
        match result {
            Ok(r) => t[index].response = Some(r.text.clone()),
            Err(e) => t[index].error = Some(e.to_string()),
        }
    }

    fn call(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let backend = self.route(&req.tag);
        let mut retry = 0;
        loop {
            let started = Instant::now();
            match backend.complete(req) {
                Ok(mut resp) => {
                    if resp.latency.is_zero() {
                        resp.latency = started.elapsed();
                    }
                    return Ok(resp);
                }
                Err(e) if e.is_transient() && retry < self.retry.max_retries => {
                    log::warn!("{} request {:?} failed ({e}), retrying", backend.name(), req.tag);
                    (self.sleeper)(self.retry.delay(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let index = self.open_entry(req);
        let result = self.call(req);
        self.close_entry(index, &result);
        result
    }

    /// Issues all requests, at most `max_in_flight` at a time. Results are
    /// aligned with `reqs`; one slot failing does not affect the others.
    pub fn complete_many(&self, reqs: &[ModelRequest]) -> Vec<Result<ModelResponse, GatewayError>> {
        let indices: Vec<usize> = reqs.iter().map(|r| self.open_entry(r)).collect();
        let slots: Vec<OnceLock<Result<ModelResponse, GatewayError>>> = reqs.iter().map(|_| OnceLock::new()).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(reqs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let _ = slots[i].set(self.call(&reqs[i]));
                });
            }
        });
        slots
            .into_iter()
            .zip(indices)
            .map(|(slot, index)| {
                let result = slot.into_inner().expect("every slot is filled");
                self.close_entry(index, &result);
                result
            })
            .collect()
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().unwrap().clone()
    }

    pub fn clear_transcript(&self) {
        self.transcript.lock().unwrap().clear();
    }
}
