//! OpenAI-compatible chat-completions transport.
//!
//! Requests are JSON bodies with a message list whose parts are text and
//! base64 `data:` image URLs. The same client backs both the remote grader
//! and the remote thought augmenter.

use base64::Engine as _;
use serde_json::{json, Value};

use super::prompt::{build_grading_prompt, parse_grade, Message, MessagePart};
use super::{BackendError, GradeRequest, GradeResult, GraderBackend};

/// Anything that can turn a message sequence into a completion string.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<String, BackendError>;
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig { endpoint: endpoint.into(), model: model.into(), api_key: None, timeout_secs: 120 }
    }
}

/// Blocking HTTP client speaking the chat-completions wire format.
pub struct RemoteChatClient {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteChatClient { config, client })
    }

    /// Encode messages into the wire body. Image parts are read from disk
    /// and inlined as base64 data URLs.
    pub fn encode_body(&self, messages: &[Message]) -> Result<Value, BackendError> {
        let mut wire_messages = Vec::with_capacity(messages.len());
        for message in messages {
            let mut parts = Vec::with_capacity(message.parts.len());
            for part in &message.parts {
                match part {
                    MessagePart::Text(text) => {
                        parts.push(json!({"type": "text", "text": text}));
                    }
                    MessagePart::ImageFile(path) => {
                        let bytes = std::fs::read(path)
                            .map_err(|e| BackendError::MissingImage(format!("{path}: {e}")))?;
                        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                        parts.push(json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:image/png;base64,{b64}")}
                        }));
                    }
                }
            }
            wire_messages.push(json!({"role": message.role.as_str(), "content": parts}));
        }
        Ok(json!({"model": self.config.model, "messages": wire_messages}))
    }
}

impl ChatBackend for RemoteChatClient {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        let body = self.encode_body(messages)?;
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let detail = response.text().unwrap_or_default();
            return Err(BackendError::Rejected(format!("HTTP {status}: {detail}")));
        }
        let value: Value = response.json().map_err(|e| BackendError::Transport(e.to_string()))?;
        extract_content(&value)
    }
}

fn extract_content(value: &Value) -> Result<String, BackendError> {
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::Rejected("response carries no choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::Rejected(format!("unexpected content shape: {other}"))),
    }
}

/// Grader that runs the committed grading prompt against any chat backend
/// and parses the score line.
pub struct PromptGraderBackend<C: ChatBackend> {
    chat: C,
    id: String,
}

impl<C: ChatBackend> PromptGraderBackend<C> {
    pub fn new(chat: C) -> Self {
        let id = format!("remote:{}", chat.id());
        PromptGraderBackend { chat, id }
    }
}

impl<C: ChatBackend> GraderBackend for PromptGraderBackend<C> {
    fn id(&self) -> &str {
        &self.id
    }

    fn grade(&self, request: &GradeRequest) -> Result<GradeResult, BackendError> {
        let messages = build_grading_prompt(request)
            .map_err(|e| BackendError::MissingImage(e.to_string()))?;
        let raw = self.chat.complete(&messages)?;
        let score = parse_grade(&raw)?;
        Ok(GradeResult {
            score,
            stages: std::collections::BTreeMap::new(),
            raw,
            grader_id: self.id.clone(),
        })
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.chat.max_concurrency()
    }
}
