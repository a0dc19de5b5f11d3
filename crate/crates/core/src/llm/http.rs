//! Chat-completion backend over HTTP, plus the small JSON POST helper shared
//! with the embedding client.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LlmBackend, LlmError};

pub const ENV_URL: &str = "COGGRAG_LLM_URL";
pub const ENV_KEY: &str = "COGGRAG_LLM_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`. Endpoint paths are appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Attempts in total, including the first.
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let url = std::env::var(ENV_URL).map_err(|_| LlmError::Transport {
            attempts: 0,
            message: format!("{ENV_URL} is not set"),
        })?;
        let mut cfg = Self::new(url);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

pub struct JsonPoster {
    client: reqwest::blocking::Client,
    config: HttpConfig,
}

impl JsonPoster {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { client, config })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B, attempt: u32) -> Result<R, LlmError> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport {
            attempts: attempt,
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: body.lines().next().unwrap_or("").to_string(),
            });
        }
        resp.json::<R>().map_err(|e| LlmError::Malformed(e.to_string()))
    }

    /// POST `body` as JSON, retrying transport failures, 429 and 5xx with
    /// exponential backoff up to `max_attempts`.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, LlmError> {
        let url = self.url(path);
        let attempts = self.config.max_attempts.max(1);
        let mut delay = self.config.backoff;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(&url, body, attempt) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    last = Some(e);
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(LlmError::Transport { message, .. }) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or(LlmError::Transport {
            attempts,
            message: "no attempt made".into(),
        }))
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpBackend {
    poster: JsonPoster,
    model: String,
    identity: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Result<Self, LlmError> {
        let model = model.into();
        let identity = format!("http:{model}");
        Ok(Self {
            poster: JsonPoster::new(config)?,
            model,
            identity,
        })
    }
}

impl LlmBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let resp: ChatResponse = self.poster.post("chat/completions", &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("response has no message content".into()))
    }

    fn identity(&self) -> &str {
        &self.identity
    }
}
