//! Chat backends used as the mutation engine.
//!
//! Three backends share the [`Backend`] trait: a live chat-completions HTTP
//! client, a deterministic offline mutator, and a transcript replayer.

mod extract;
mod live;
mod mock;
mod replay;
mod transcript;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codediff::SourceText;

pub use extract::{extract_code, ExtractError};
pub use live::{Backoff, LiveBackend};
pub use mock::{mock_mutate, sloppy_mock_mutate, MockBackend, MockStyle, REFERENCE_PROGRAM};
pub use replay::ReplayBackend;
pub use transcript::{TranscriptEntry, TranscriptLog};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication rejected (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingKey(String),
    #[error("replay transcript exhausted after {0} exchange(s)")]
    ReplayExhausted(usize),
    #[error("replayed request {step} differs from the recorded one")]
    ReplayMismatch { step: usize },
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
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
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// What the caller wants from a request. Live backends only see the
/// messages; offline backends use the intent to act without parsing prose.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestIntent {
    Generation,
    Mutation { parent: SourceText, rate_percent: f64 },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub intent: RequestIntent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
    Replay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Live => "live",
            BackendKind::Mock => "mock",
            BackendKind::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub request_messages: Vec<ChatMessage>,
    /// Verbatim model output.
    pub response_text: String,
    pub token_usage: TokenUsage,
    pub latency_s: f64,
    pub backend: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub model_name: String,
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_s: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-4o-2024-08-06".into(),
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 1.0,
            max_retries: 3,
            timeout_s: 120.0,
        }
    }
}

impl ModelConfig {
    pub fn validate_live(&self) -> Result<(), LlmError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(LlmError::Config("endpoint_url is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

pub trait Backend: Send {
    fn kind(&self) -> BackendKind;

    fn complete(&mut self, request: &ChatRequest) -> Result<ChatExchange, LlmError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        (**self).complete(request)
    }
}
