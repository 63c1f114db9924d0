use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use super::{GatewayError, ModelBackend, ModelRequest, ModelResponse};

type Responder = dyn Fn(&ModelRequest) -> Result<String, GatewayError> + Send + Sync;

/// A backend computed by a function of the request.
pub struct ScriptedBackend {
    name: String,
    responder: Box<Responder>,
}

impl ScriptedBackend {
    pub fn new(
        name: impl Into<String>,
        responder: impl Fn(&ModelRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedBackend { name: name.into(), responder: Box::new(responder) }
    }
}

impl ModelBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let text = (self.responder)(req)?;
        Ok(ModelResponse { text, backend: self.name.clone(), latency: Duration::ZERO, usage: None })
    }
}

/// Queues of canned replies keyed by tag prefix (longest prefix wins).
/// The last reply in a queue repeats once the others are used up.
#[derive(Default)]
pub struct CannedBackend {
    queues: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl CannedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, tag_prefix: &str, reply: impl Into<String>) -> &Self {
        self.queues
            .lock()
            .unwrap()
            .entry(tag_prefix.to_string())
            .or_default()
            .push_back(reply.into());
        self
    }

    pub fn with(self, tag_prefix: &str, reply: impl Into<String>) -> Self {
        self.push(tag_prefix, reply);
        self
    }
}

impl ModelBackend for CannedBackend {
    fn name(&self) -> &str {
        "canned"
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let mut queues = self.queues.lock().unwrap();
        let queue = queues
            .iter_mut()
            .filter(|(prefix, _)| req.tag.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, q)| q)
            .ok_or_else(|| GatewayError::ReplayMiss(req.replay_key()))?;
        let text = if queue.len() > 1 { queue.pop_front() } else { queue.front().cloned() }
            .ok_or_else(|| GatewayError::ReplayMiss(req.replay_key()))?;
        Ok(ModelResponse { text, backend: "canned".into(), latency: Duration::ZERO, usage: None })
    }
}
