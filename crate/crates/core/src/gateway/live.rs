//! JSON-over-HTTPS chat backends.

use std::str::FromStr;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{GatewayError, ModelBackend, ModelRequest, ModelResponse, Part, Role, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    OpenAi,
    Anthropic,
    Google,
}

impl FromStr for Provider {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "openai" | "gpt" | "gpt-4o" => Ok(Provider::OpenAi),
            "anthropic" | "claude" => Ok(Provider::Anthropic),
            "google" | "gemini" => Ok(Provider::Google),
            other => Err(GatewayError::InvalidRequest(format!("unknown live backend {other:?}"))),
        }
    }
}

impl Provider {
    pub fn key_var(self) -> &'static str {
        match self {
            Provider::OpenAi => "MAPLE_OPENAI_KEY",
            Provider::Anthropic => "MAPLE_ANTHROPIC_KEY",
            Provider::Google => "MAPLE_GOOGLE_KEY",
        }
    }

    fn default_base(self) -> &'static str {
        match self {
            Provider::OpenAi => "https://api.openai.com",
            Provider::Anthropic => "https://api.anthropic.com",
            Provider::Google => "https://generativelanguage.googleapis.com",
        }
    }

    fn default_model(self) -> &'static str {
        match self {
            Provider::OpenAi => "gpt-4o-2024-11-20",
            Provider::Anthropic => "claude-3-5-sonnet-20241022",
            Provider::Google => "gemini-1.5-pro",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Provider::OpenAi => "openai",
            Provider::Anthropic => "anthropic",
            Provider::Google => "google",
        }
    }
}

pub struct LiveBackend {
    provider: Provider,
    model: String,
    key: String,
    base_url: String,
    agent: ureq::Agent,
    name: String,
}

fn b64(data: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(data)
}

impl LiveBackend {
    pub fn new(provider: Provider, key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        LiveBackend {
            provider,
            model: provider.default_model().to_string(),
            key: key.into(),
            base_url: provider.default_base().to_string(),
            agent,
            name: provider.label().to_string(),
        }
    }

    /// Reads the API key from the provider's environment variable.
    pub fn from_env(provider: Provider) -> Result<Self, GatewayError> {
        match std::env::var(provider.key_var()) {
            Ok(k) if !k.trim().is_empty() => Ok(Self::new(provider, k.trim())),
            _ => Err(GatewayError::AuthMissing(provider.key_var().to_string())),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into().trim_end_matches('/').to_string();
        self
    }

    fn body(&self, req: &ModelRequest) -> (String, Value) {
        match self.provider {
            Provider::OpenAi => {
                let messages: Vec<Value> = req
                    .messages
                    .iter()
                    .map(|m| {
                        let content: Vec<Value> = m
                            .parts
                            .iter()
                            .map(|p| match p {
                                Part::Text { text } => json!({"type": "text", "text": text}),
                                Part::Image { media_type, data } => json!({
                                    "type": "image_url",
                                    "image_url": {"url": format!("data:{media_type};base64,{}", b64(data))}
                                }),
                            })
                            .collect();
                        json!({"role": m.role, "content": content})
                    })
                    .collect();
                (
                    format!("{}/v1/chat/completions", self.base_url),
                    json!({"model": self.model, "temperature": req.temperature, "max_tokens": req.max_output, "messages": messages}),
                )
            }
            Provider::Anthropic => {
                let system: Vec<String> = req
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .flat_map(|m| &m.parts)
                    .filter_map(|p| match p {
                        Part::Text { text } => Some(text.clone()),
                        Part::Image { .. } => None,
                    })
                    .collect();
                let messages: Vec<Value> = req
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| {
                        let content: Vec<Value> = m
                            .parts
                            .iter()
                            .map(|p| match p {
                                Part::Text { text } => json!({"type": "text", "text": text}),
                                Part::Image { media_type, data } => json!({
                                    "type": "image",
                                    "source": {"type": "base64", "media_type": media_type, "data": b64(data)}
                                }),
                            })
                            .collect();
                        json!({"role": m.role, "content": content})
                    })
                    .collect();
                let mut body = json!({
                    "model": self.model,
                    "max_tokens": req.max_output,
                    "temperature": req.temperature,
                    "messages": messages,
                });
                if !system.is_empty() {
                    body["system"] = json!(system.join("\n\n"));
                }
                (format!("{}/v1/messages", self.base_url), body)
            }
            Provider::Google => {
                let to_parts = |parts: &[Part]| -> Vec<Value> {
                    parts
                        .iter()
                        .map(|p| match p {
                            Part::Text { text } => json!({"text": text}),
                            Part::Image { media_type, data } => {
                                json!({"inline_data": {"mime_type": media_type, "data": b64(data)}})
                            }
                        })
                        .collect()
                };
                let contents: Vec<Value> = req
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| {
                        let role = if m.role == Role::Assistant { "model" } else { "user" };
                        json!({"role": role, "parts": to_parts(&m.parts)})
                    })
                    .collect();
                let mut body = json!({
                    "contents": contents,
                    "generationConfig": {"temperature": req.temperature, "maxOutputTokens": req.max_output},
                });
                let system: Vec<Value> = req
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .flat_map(|m| to_parts(&m.parts))
                    .collect();
                if !system.is_empty() {
                    body["systemInstruction"] = json!({"parts": system});
                }
                (
                    format!("{}/v1beta/models/{}:generateContent?key={}", self.base_url, self.model, self.key),
                    body,
                )
            }
        }
    }

    fn extract(&self, reply: &Value) -> Result<(String, Option<Usage>), GatewayError> {
        let bad = || GatewayError::BadReply(reply.to_string().chars().take(200).collect());
        let tokens = |a: &Value, b: &Value| match (a.as_u64(), b.as_u64()) {
            (Some(input_tokens), Some(output_tokens)) => Some(Usage { input_tokens, output_tokens }),
            _ => None,
        };
        match self.provider {
            Provider::OpenAi => {
                let text = reply["choices"][0]["message"]["content"].as_str().ok_or_else(bad)?;
                Ok((text.to_string(), tokens(&reply["usage"]["prompt_tokens"], &reply["usage"]["completion_tokens"])))
            }
            Provider::Anthropic => {
                let blocks = reply["content"].as_array().ok_or_else(bad)?;
                let text: String = blocks.iter().filter_map(|b| b["text"].as_str()).collect();
                Ok((text, tokens(&reply["usage"]["input_tokens"], &reply["usage"]["output_tokens"])))
            }
            Provider::Google => {
                let parts = reply["candidates"][0]["content"]["parts"].as_array().ok_or_else(bad)?;
                let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
                let usage = &reply["usageMetadata"];
                Ok((text, tokens(&usage["promptTokenCount"], &usage["candidatesTokenCount"])))
            }
        }
    }
}

impl ModelBackend for LiveBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let (url, body) = self.body(req);
        let started = Instant::now();
        let mut call = self.agent.post(&url).header("content-type", "application/json");
        call = match self.provider {
            Provider::OpenAi => call.header("authorization", &format!("Bearer {}", self.key)),
            Provider::Anthropic => call.header("x-api-key", &self.key).header("anthropic-version", "2023-06-01"),
            Provider::Google => call,
        };
        let mut resp = call.send_json(&body).map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(GatewayError::Transport(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(GatewayError::Rejected { status, body: text.chars().take(500).collect() });
        }
        let reply: Value = serde_json::from_str(&text).map_err(|e| GatewayError::BadReply(e.to_string()))?;
        let (text, usage) = self.extract(&reply)?;
        Ok(ModelResponse { text, backend: self.name.clone(), latency: started.elapsed(), usage })
    }
}
