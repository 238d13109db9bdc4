//! Chat-completions client over blocking HTTP with exponential backoff.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, ChatExchange, ChatMessage, ChatRequest, LlmError, ModelConfig, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_millis(500),
            factor: 2.0,
            max: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let secs = self.initial.as_secs_f64() * self.factor.powi(attempt as i32);
        Duration::from_secs_f64(secs.min(self.max.as_secs_f64()))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

pub struct LiveBackend {
    config: ModelConfig,
    api_key: String,
    client: Client,
    backoff: Backoff,
}

impl LiveBackend {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_env(config: ModelConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingKey(config.api_key_env.clone()))?;
        Self::new(config, key)
    }

    pub fn new(config: ModelConfig, api_key: String) -> Result<Self, LlmError> {
        config.validate_live()?;
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
            backoff: Backoff::default(),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> Result<(String, TokenUsage), Attempt> {
        let resp = self
            .client
            .post(&self.config.endpoint_url)
            .bearer_auth(&self.api_key)
            .header(CONTENT_TYPE, "application/json")
            .body(body.to_owned())
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retry(LlmError::Timeout { attempts: 0 })
                } else {
                    Attempt::Retry(LlmError::Transport(e.to_string()))
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(LlmError::Timeout { attempts: 0 })
            } else {
                Attempt::Retry(LlmError::Transport(e.to_string()))
            }
        })?;
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Attempt::Fatal(LlmError::Auth {
                status: status.as_u16(),
                message: truncate(&text),
            }));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(LlmError::Http {
                status: status.as_u16(),
                message: truncate(&text),
            }));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(LlmError::Http {
                status: status.as_u16(),
                message: truncate(&text),
            }));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(LlmError::BadResponse(e.to_string())))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(LlmError::BadResponse("no message content".into())))?;
        Ok((content, parsed.usage.unwrap_or_default()))
    }
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 300;
    match s.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}

impl Backend for LiveBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let body = serde_json::to_string(&CompletionRequest {
            model: &self.config.model_name,
            messages: &request.messages,
            temperature: self.config.temperature,
        })
        .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let started = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff.delay(attempt - 1));
            }
            match self.attempt(&body) {
                Ok((response_text, token_usage)) => {
                    return Ok(ChatExchange {
                        request_messages: request.messages.clone(),
                        response_text,
                        token_usage,
                        latency_s: started.elapsed().as_secs_f64(),
                        backend: BackendKind::Live,
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("chat request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(match last {
            LlmError::Timeout { .. } => LlmError::Timeout { attempts },
            other => other,
        })
    }
}
