//! Language-model transport, prompt rendering and response parsing.
//!
//! All network activity of the crate lives in [`http`]. The [`MockLlm`]
//! answers deterministically from a digest of the conversation so that the
//! evolutionary loop can be exercised offline.

mod http;
mod mock;
mod prompts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpLlm;
pub use mock::MockLlm;
pub use prompts::{
    describe_subclass, parse_program_response, parse_selection_response, render_generation_prompt,
    render_init_prompt, render_retry_message, render_selection_prompt, render_selection_retry_message, ArityMismatch, CandidateCount, CandidateEntry,
    ProgramResponseError,
    SelectionResponseError, MAX_SELECTION_CANDIDATES,
};

pub const ENV_BASE_URL: &str = "INSTSPEC_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "INSTSPEC_LLM_API_KEY";
pub const ENV_MODEL: &str = "INSTSPEC_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    E1,
    E2,
    M1,
    M2,
    M3,
}

impl OperatorKind {
    /// Cyclic schedule order.
    pub const ALL: [OperatorKind; 5] =
        [OperatorKind::E1, OperatorKind::E2, OperatorKind::M1, OperatorKind::M2, OperatorKind::M3];

    pub fn arity(self) -> usize {
        match self {
            OperatorKind::E1 | OperatorKind::E2 => 2,
            OperatorKind::M1 | OperatorKind::M2 | OperatorKind::M3 => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            OperatorKind::E1 => "E1",
            OperatorKind::E2 => "E2",
            OperatorKind::M1 => "M1",
            OperatorKind::M2 => "M2",
            OperatorKind::M3 => "M3",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorKind::ALL
            .into_iter()
            .find(|o| o.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid LLM configuration: {0}")]
    Config(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected response from the model endpoint: {0}")]
    Protocol(String),
    #[error("empty message content")]
    EmptyMessage,
}

/// A chat-completion backend. Implementations must be usable from several
/// worker threads at once.
pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        (**self).complete(messages)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_transport_retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.deepseek.com/v1".into(),
            model_name: "deepseek-chat".into(),
            api_key_env: ENV_API_KEY.into(),
            temperature: 1.0,
            timeout_secs: 120.0,
            max_transport_retries: 3,
        }
    }
}

impl LlmConfig {
    /// Defaults overridden by `INSTSPEC_LLM_BASE_URL` and `INSTSPEC_LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            cfg.base_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            cfg.model_name = model;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(LlmError::Config(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base URL is empty".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model name is empty".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    if messages.is_empty() || messages.iter().any(|m| m.content.trim().is_empty()) {
        return Err(LlmError::EmptyMessage);
    }
    Ok(())
}
