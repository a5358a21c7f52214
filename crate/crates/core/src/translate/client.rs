//! Chat-completion backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CompletionError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("empty completion")]
    Empty,
}

/// Anything that turns a system/user message pair into completion text.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, CompletionError>;
}

impl<C: CompletionClient + ?Sized> CompletionClient for &C {
    fn complete(&self, system: &str, user: &str) -> Result<String, CompletionError> {
        (**self).complete(system, user)
    }
}

/// JSON field names used on the wire.
///
/// The request body is `{system_field: .., user_field: .., model_field: ..}`;
/// the completion is read from the response at `response_pointer`
/// (RFC 6901 JSON pointer).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireFormat {
    pub system_field: String,
    pub user_field: String,
    pub model_field: String,
    pub response_pointer: String,
}

impl Default for WireFormat {
    fn default() -> Self {
        Self {
            system_field: "system".into(),
            user_field: "user".into(),
            model_field: "model".into(),
            response_pointer: "/completion".into(),
        }
    }
}

impl WireFormat {
    pub fn request_body(&self, model: &str, system: &str, user: &str) -> Value {
        let mut body = Map::new();
        body.insert(self.system_field.clone(), Value::from(system));
        body.insert(self.user_field.clone(), Value::from(user));
        body.insert(self.model_field.clone(), Value::from(model));
        Value::Object(body)
    }

    pub fn extract(&self, response: &Value) -> Result<String, CompletionError> {
        let text = response
            .pointer(&self.response_pointer)
            .ok_or_else(|| {
                CompletionError::Malformed(format!("no value at `{}`", self.response_pointer))
            })?
            .as_str()
            .ok_or_else(|| {
                CompletionError::Malformed(format!("`{}` is not a string", self.response_pointer))
            })?;
        if text.trim().is_empty() {
            return Err(CompletionError::Empty);
        }
        Ok(text.to_owned())
    }
}

#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub model: String,
    pub credential: Option<String>,
    pub timeout: Duration,
    pub wire: WireFormat,
}

/// Generic JSON-over-HTTP chat-completion client.
pub struct HttpCompletionClient {
    agent: ureq::Agent,
    config: HttpClientConfig,
}

impl HttpCompletionClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, system: &str, user: &str) -> Result<String, CompletionError> {
        let body = self
            .config
            .wire
            .request_body(&self.config.model, system, user);
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.credential {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| CompletionError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default()
                .chars()
                .take(200)
                .collect();
            return Err(CompletionError::Status { status, body });
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| CompletionError::Malformed(e.to_string()))?;
        self.config.wire.extract(&value)
    }
}
