//! Pipeline configuration.
//!
//! Files hold flat `key = value` lines (`#` starts a comment). Environment
//! variables named `COGGRAG_<KEY>` (key upper-cased) override file values, and
//! command-line flags override both.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::extraction::ExtractionConfig;
use crate::llm::{Temperatures, DEFAULT_MAX_TOKENS};
use crate::mindmap::DecompositionConfig;
use crate::reasoning::ReasoningConfig;
use crate::retrieval::{HashedEmbedder, RetrievalConfig};

pub const ENV_CONFIG: &str = "COGGRAG_CONFIG";
pub const ENV_PREFIX: &str = "COGGRAG_";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("reading config {path}: {message}")]
    Io { path: String, message: String },
}

/// Where an LLM role gets its completions from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BackendSpec {
    /// Replay a script file.
    Script(String),
    /// Chat-completion endpoint from `COGGRAG_LLM_URL` / `COGGRAG_LLM_KEY`.
    Http,
}

impl FromStr for BackendSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "http" {
            Ok(BackendSpec::Http)
        } else if let Some(path) = s.strip_prefix("script:") {
            if path.is_empty() {
                return Err("script backend needs a path".into());
            }
            Ok(BackendSpec::Script(path.to_string()))
        } else {
            Err(format!("expected `http` or `script:<path>`, got `{s}`"))
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Script(p) => write!(f, "script:{p}"),
            BackendSpec::Http => f.write_str("http"),
        }
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashed,
    Http,
}

impl FromStr for EmbedderSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "hashed" => Ok(EmbedderSpec::Hashed),
            "http" => Ok(EmbedderSpec::Http),
            other => Err(format!("expected `hashed` or `http`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub hops: usize,
    pub max_depth: usize,
    pub max_parse_retries: u32,
    pub temperatures: Temperatures,
    pub max_tokens: u32,
    pub decomposition_enabled: bool,
    pub global_keys_enabled: bool,
    pub verification_enabled: bool,
    pub hub_cap: usize,
    pub max_evidence_triples: usize,
    pub resolve_threshold: f64,
    pub res_backend: BackendSpec,
    pub ver_backend: BackendSpec,
    pub llm_model: String,
    pub embedder: EmbedderSpec,
    pub embed_model: String,
    pub embed_dimension: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.7,
            hops: 1,
            max_depth: 3,
            max_parse_retries: 1,
            temperatures: Temperatures::default(),
            max_tokens: DEFAULT_MAX_TOKENS,
            decomposition_enabled: true,
            global_keys_enabled: true,
            verification_enabled: true,
            hub_cap: 512,
            max_evidence_triples: 64,
            resolve_threshold: 0.7,
            res_backend: BackendSpec::Http,
            ver_backend: BackendSpec::Http,
            llm_model: "default".into(),
            embedder: EmbedderSpec::Hashed,
            embed_model: "default".into(),
            embed_dimension: HashedEmbedder::DEFAULT_DIMENSION,
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`].
pub const KEYS: &[&str] = &[
    "epsilon",
    "hops",
    "max_depth",
    "max_parse_retries",
    "exploration_temperature",
    "reasoning_temperature",
    "max_tokens",
    "decomposition_enabled",
    "global_keys_enabled",
    "verification_enabled",
    "hub_cap",
    "max_evidence_triples",
    "resolve_threshold",
    "res_backend",
    "ver_backend",
    "llm_model",
    "embedder",
    "embed_model",
    "embed_dimension",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::Invalid {
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(ConfigError::Invalid {
            key: key.to_string(),
            message: format!("expected a boolean, got `{other}`"),
        }),
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "epsilon" => self.epsilon = parse(key, value)?,
            "hops" => self.hops = parse(key, value)?,
            "max_depth" => self.max_depth = parse(key, value)?,
            "max_parse_retries" => self.max_parse_retries = parse(key, value)?,
            "exploration_temperature" => self.temperatures.exploration = parse(key, value)?,
            "reasoning_temperature" => self.temperatures.reasoning = parse(key, value)?,
            "max_tokens" => self.max_tokens = parse(key, value)?,
            "decomposition_enabled" => self.decomposition_enabled = parse_bool(key, value)?,
            "global_keys_enabled" => self.global_keys_enabled = parse_bool(key, value)?,
            "verification_enabled" => self.verification_enabled = parse_bool(key, value)?,
            "hub_cap" => self.hub_cap = parse(key, value)?,
            "max_evidence_triples" => self.max_evidence_triples = parse(key, value)?,
            "resolve_threshold" => self.resolve_threshold = parse(key, value)?,
            "res_backend" => self.res_backend = parse(key, value)?,
            "ver_backend" => self.ver_backend = parse(key, value)?,
            "llm_model" => self.llm_model = value.trim().to_string(),
            "embedder" => self.embedder = parse(key, value)?,
            "embed_model" => self.embed_model = value.trim().to_string(),
            "embed_dimension" => self.embed_dimension = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(key.trim(), value).map_err(|e| ConfigError::Syntax {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Apply `COGGRAG_<KEY>` variables from `vars`. Variables with the prefix
    /// that do not name a config key (such as `COGGRAG_LLM_URL`) are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.as_ref().strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                KEYS.contains(&key.as_str()).then(|| (key, v.as_ref().to_string()))
            })
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", "must lie in [0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.resolve_threshold) {
            return bad("resolve_threshold", "must lie in [-1, 1]");
        }
        if self.hops == 0 {
            return bad("hops", "must be positive");
        }
        if self.hub_cap == 0 {
            return bad("hub_cap", "must be positive");
        }
        if self.max_evidence_triples == 0 {
            return bad("max_evidence_triples", "must be positive");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens", "must be positive");
        }
        if self.embed_dimension == 0 {
            return bad("embed_dimension", "must be positive");
        }
        for (key, t) in [
            ("exploration_temperature", self.temperatures.exploration),
            ("reasoning_temperature", self.temperatures.reasoning),
        ] {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(key, "must be a non-negative number");
            }
        }
        Ok(())
    }

    pub fn decomposition(&self) -> DecompositionConfig {
        DecompositionConfig {
            max_depth: self.max_depth,
            max_parse_retries: self.max_parse_retries,
            temperature: self.temperatures.exploration,
            max_tokens: self.max_tokens,
        }
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig {
            temperature: self.temperatures.exploration,
            max_tokens: self.max_tokens,
        }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            epsilon: self.epsilon,
            hops: self.hops,
            hub_cap: self.hub_cap,
            resolve_threshold: self.resolve_threshold,
        }
    }

    pub fn reasoning(&self) -> ReasoningConfig {
        ReasoningConfig {
            verification_enabled: self.verification_enabled,
            max_evidence_triples: self.max_evidence_triples,
            temperature: self.temperatures.reasoning,
            max_tokens: self.max_tokens,
        }
    }
}
