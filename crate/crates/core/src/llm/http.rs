//! Chat-completions client over HTTP(S).

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{check_messages, ChatMessage, ChatReply, LlmClient, LlmConfig, LlmError};

const REDACTED: &str = "[REDACTED]";

pub struct HttpLlm {
    config: LlmConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    backoff: Duration,
    transcript: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl HttpLlm {
    /// Reads the bearer token from the environment variable named in `config`.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: LlmConfig, api_key: impl Into<String>) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, api_key: api_key.into(), client, backoff: Duration::from_millis(500), transcript: None })
    }

    /// Initial delay between transport retries; doubled after each failure.
    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.backoff = initial;
        self
    }

    /// Appends every exchange to `path` as one JSON object per line.
    pub fn with_transcript(mut self, path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Config(format!("cannot open transcript {}: {e}", path.display())))?;
        self.transcript = Some(Mutex::new(file));
        Ok(self)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn redact(&self, text: &str) -> String {
        if self.api_key.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.api_key, REDACTED)
        }
    }

    fn log(&self, request: &serde_json::Value, outcome: &Result<ChatReply, LlmError>) {
        let Some(file) = &self.transcript else { return };
        let result = match outcome {
            Ok(r) => json!({"text": r.text, "prompt_tokens": r.prompt_tokens, "completion_tokens": r.completion_tokens}),
            Err(e) => json!({"error": e.to_string()}),
        };
        let line = self.redact(&json!({"request": request, "response": result}).to_string());
        if let Ok(mut f) = file.lock() {
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("transcript write failed: {e}");
            }
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<ChatReply, Attempt> {
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(self.redact(&e.to_string())))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(self.redact(&e.to_string())))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let snippet: String = self.redact(&text).chars().take(200).collect();
            return Err(Attempt::Fatal(LlmError::Protocol(format!("HTTP {status}: {snippet}"))));
        }
        let parsed: CompletionBody =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(LlmError::Protocol(format!("bad body: {e}"))))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(LlmError::Protocol("no choices in response".into())))?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(ChatReply { text: content, prompt_tokens: usage.prompt_tokens, completion_tokens: usage.completion_tokens })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        check_messages(messages)?;
        let body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let attempts = self.config.max_transport_retries + 1;
        let mut delay = self.backoff;
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(reply) => {
                    let out = Ok(reply);
                    self.log(&body, &out);
                    return out;
                }
                Err(Attempt::Fatal(e)) => {
                    let out = Err(e);
                    self.log(&body, &out);
                    return out;
                }
                Err(Attempt::Retry(msg)) => {
                    log::warn!("LLM request attempt {n}/{attempts} failed: {msg}");
                    last = msg;
                    if n < attempts {
                        std::thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        let out = Err(LlmError::Transport { attempts, message: last });
        self.log(&body, &out);
        out
    }
}
