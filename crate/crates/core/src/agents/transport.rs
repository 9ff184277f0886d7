//! Chat-completion transport and the retrying agent call.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::envelopes::Envelope;
use super::parse::{parse_envelope, ParseLimits, ValidationError};
use super::roles::AgentRole;

pub const LLM_URL_VAR: &str = "DISCOVERY_LLM_URL";
pub const LLM_KEY_VAR: &str = "DISCOVERY_LLM_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("http error: {0}")]
    Http(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

pub trait LlmTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("{role} unavailable: {reason}")]
    Unavailable { role: AgentRole, reason: String },
    #[error("{role} output malformed after {attempts} attempts: {error}")]
    Malformed {
        role: AgentRole,
        error: ValidationError,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub raw: String,
    pub envelope: Envelope,
    /// Number of re-prompts needed before the reply validated.
    pub retry_count: u32,
}

/// Calls the transport until the reply validates for `role`. Each retry
/// appends the previous validation error to the user prompt. Transport
/// failures and parse failures share the same `retries` budget.
pub fn call_agent(
    role: AgentRole,
    model: &str,
    system: &str,
    user: &str,
    transport: &dyn LlmTransport,
    retries: u32,
    limits: ParseLimits,
) -> Result<AgentReply, AgentError> {
    let mut prompt = user.to_string();
    let mut last_validation: Option<ValidationError> = None;
    let mut last_transport: Option<TransportError> = None;
    for attempt in 0..=retries {
        let request = ChatRequest {
            model: model.to_string(),
            system: system.to_string(),
            user: prompt.clone(),
            temperature: role.temperature(),
            max_tokens: role.max_output_tokens(),
        };
        let raw = match transport.complete(&request) {
            Ok(raw) => raw,
            Err(e) => {
                tracing::warn!(role = role.name(), attempt, error = %e, "transport failure");
                last_transport = Some(e);
                continue;
            }
        };
        match parse_envelope(&raw, role, limits) {
            Ok(envelope) => {
                return Ok(AgentReply {
                    raw,
                    envelope,
                    retry_count: attempt,
                })
            }
            Err(e) => {
                tracing::warn!(role = role.name(), attempt, error = %e, "invalid agent output");
                prompt = format!(
                    "{user}\n\nYour previous reply was rejected ({e}). Reply again with one JSON object that fixes this."
                );
                last_validation = Some(e);
            }
        }
    }
    match (last_validation, last_transport) {
        (Some(error), _) => Err(AgentError::Malformed {
            role,
            error,
            attempts: retries + 1,
        }),
        (None, Some(e)) => Err(AgentError::Unavailable {
            role,
            reason: e.to_string(),
        }),
        (None, None) => unreachable!("at least one attempt is always made"),
    }
}

/// OpenAI-style `/chat/completions` endpoint.
pub struct HttpTransport {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads `DISCOVERY_LLM_URL` and `DISCOVERY_LLM_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self, TransportError> {
        let url = std::env::var(LLM_URL_VAR).map_err(|_| TransportError::Http(format!("{LLM_URL_VAR} not set")))?;
        let key = std::env::var(LLM_KEY_VAR).unwrap_or_default();
        Ok(Self::new(url, key, timeout))
    }
}

pub(crate) fn map_ureq(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Http(other.to_string()),
    }
}

impl LlmTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut response = self
            .agent
            .post(format!("{}/chat/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(map_ureq)?;
        let value: Value = response.body_mut().read_json().map_err(map_ureq)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Protocol("missing choices[0].message.content".into()))
    }
}

/// Replays queued replies in order and records every request.
#[derive(Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("lock").clone()
    }
}

impl LlmTransport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.requests.lock().expect("lock").push(request.clone());
        self.replies
            .lock()
            .expect("lock")
            .pop_front()
            .unwrap_or(Err(TransportError::Http("script exhausted".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JUDGE_OK: &str = r#"{"novel": true, "reasoning": "new mechanism"}"#;

    #[test]
    fn malformed_then_valid() {
        let t = ScriptedTransport::new([Ok("{\"novel\": 3}".to_string()), Ok(JUDGE_OK.to_string())]);
        let reply = call_agent(AgentRole::Judge, "m", "sys", "usr", &t, 3, ParseLimits::default()).unwrap();
        assert_eq!(reply.retry_count, 1);
        let reqs = t.requests();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[1].user.contains("novel"), "retry prompt carries the error");
        assert_eq!(reqs[0].temperature, 0.1);
    }

    #[test]
    fn repeated_timeouts_are_unavailable() {
        let t = ScriptedTransport::new((0..4).map(|_| Err(TransportError::Timeout)));
        let err = call_agent(AgentRole::Judge, "m", "s", "u", &t, 3, ParseLimits::default()).unwrap_err();
        assert!(matches!(err, AgentError::Unavailable { .. }));
        assert_eq!(t.requests().len(), 4);
    }

    #[test]
    fn persistent_garbage_is_malformed() {
        let t = ScriptedTransport::new((0..4).map(|_| Ok("nope".to_string())));
        let err = call_agent(AgentRole::Synthesis, "m", "s", "u", &t, 3, ParseLimits::default()).unwrap_err();
        assert!(matches!(err, AgentError::Malformed { attempts: 4, .. }));
    }
}
