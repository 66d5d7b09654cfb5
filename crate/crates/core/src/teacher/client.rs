use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    /// Guesses with confidences.
    Logits,
    /// Step-by-step explanation.
    Rationale,
}

#[derive(Debug, Clone, Copy)]
pub struct TeacherRequest<'a> {
    pub node_id: NodeId,
    pub kind: PromptKind,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying (timeouts, 429, 5xx).
    #[error("transient teacher failure: {0}")]
    Transient(String),
    #[error("teacher failure: {0}")]
    Fatal(String),
}

/// Anything that can answer a rendered prompt. Mock implementations may use
/// `node_id` to look up ground truth; remote ones only see the prompt text.
pub trait TeacherClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &TeacherRequest<'_>) -> Result<String, TransportError>;
}

impl<T: TeacherClient + ?Sized> TeacherClient for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &TeacherRequest<'_>) -> Result<String, TransportError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpTeacherConfig {
    pub endpoint: String,
    pub model_name: String,
    /// Environment variable holding the bearer token, if any.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
}

/// Chat-completion client: `POST {"model", "messages": [{"role": "user",
/// "content": prompt}], "temperature": 0}`, reading the first choice.
pub struct HttpTeacher {
    cfg: HttpTeacherConfig,
    name: String,
    agent: ureq::Agent,
}

impl HttpTeacher {
    pub fn new(cfg: HttpTeacherConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .build()
            .into();
        Self {
            name: format!("http:{}", cfg.model_name),
            cfg,
            agent,
        }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
    }
}

/// Text of the first choice: `choices[0].message.content`, falling back
/// to `choices[0].text`.
pub fn extract_first_choice(body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_owned)
}

impl TeacherClient for HttpTeacher {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &TeacherRequest<'_>) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(var) = &self.cfg.token_env {
            match std::env::var(var) {
                Ok(token) => req = req.header("Authorization", &format!("Bearer {token}")),
                Err(_) => log::warn!("teacher token variable {var} is not set"),
            }
        }
        let mut resp = req
            .send_json(self.request_body(request.prompt))
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                    TransportError::Transient(format!("HTTP {code}"))
                }
                ureq::Error::StatusCode(code) => TransportError::Fatal(format!("HTTP {code}")),
                other => TransportError::Transient(other.to_string()),
            })?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Transient(format!("unreadable body: {e}")))?;
        extract_first_choice(&body)
            .ok_or_else(|| TransportError::Transient("response has no first choice".into()))
    }
}
