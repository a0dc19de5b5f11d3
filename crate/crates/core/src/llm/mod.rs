//! Text-generation port, prompt templates and backends.

pub mod http;
pub mod prompts;
pub mod scripted;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use prompts::{Bindings, PromptError, PromptName, PromptTemplate, Slot};
pub use scripted::{ScriptError, ScriptRule, ScriptedBackend};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

/// Sampling temperatures for the two pipeline phases. Exploration covers
/// decomposition and key extraction; reasoning covers answering, verification
/// and rethinking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperatures {
    pub exploration: f64,
    pub reasoning: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self {
            exploration: 0.4,
            reasoning: 0.0,
        }
    }
}

impl Temperatures {
    pub fn for_template(&self, name: PromptName) -> f64 {
        match name {
            PromptName::Dec | PromptName::ExtLocal | PromptName::ExtGlobal => self.exploration,
            PromptName::Res | PromptName::Ver | PromptName::Rethink => self.reasoning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Template the prompt was rendered from, for logs and diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PromptName>,
}

impl GenerationRequest {
    pub fn new(template: PromptName, prompt: String, temperature: f64, max_tokens: u32) -> Self {
        Self {
            prompt,
            temperature,
            max_tokens,
            template: Some(template),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no script rule matched a {template} prompt")]
    ScriptMiss { template: String },
    #[error("backend request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport { .. } => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A text-generation backend. Implementations must tolerate concurrent calls.
pub trait LlmBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError>;

    /// Label recorded in traces.
    fn identity(&self) -> &str;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        (**self).generate(request)
    }
    fn identity(&self) -> &str {
        (**self).identity()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        (**self).generate(request)
    }
    fn identity(&self) -> &str {
        (**self).identity()
    }
}

/// Content of the first balanced `[...]` span, trimmed.
pub fn extract_bracketed(text: &str) -> Option<&str> {
    let start = text.find('[')?;
    let mut depth = 0usize;
    for (offset, c) in text[start..].char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[start + 1..start + offset].trim());
                }
            }
            _ => {}
        }
    }
    None
}
