//! Deterministic backend that answers from an ordered list of match rules.
//!
//! Script files are line-delimited JSON:
//!
//! ```text
//! {"match": "Your task is to decompose", "reply": "[...]"}
//! {"match": "(?s)^Your task is to answer.*Input: Who", "kind": "regex", "reply": "[Alex Ferguson]"}
//! ```
//!
//! `kind` defaults to `contains` (substring match). The first rule in file
//! order whose matcher fires on the prompt wins. Blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LlmBackend, LlmError, PromptName};

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("script has no rules")]
    Empty,
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Contains(String),
    Pattern(Regex),
}

impl Matcher {
    pub fn fires(&self, prompt: &str) -> bool {
        match self {
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::Pattern(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub matcher: Matcher,
    pub reply: String,
}

impl ScriptRule {
    pub fn contains(pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Contains(pattern.into()),
            reply: reply.into(),
        }
    }

    pub fn regex(pattern: &str, reply: impl Into<String>) -> Result<Self, regex::Error> {
        Ok(Self {
            matcher: Matcher::Pattern(Regex::new(pattern)?),
            reply: reply.into(),
        })
    }
}

#[derive(Debug, Default, Deserialize, Serialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RuleKind {
    #[default]
    Contains,
    Regex,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    #[serde(rename = "match")]
    pattern: String,
    reply: String,
    #[serde(default)]
    kind: RuleKind,
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptRule>, ScriptError> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| ScriptError::Line { line: idx + 1, message };
        let record: RuleRecord = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
        if record.pattern.is_empty() {
            return Err(err("empty match pattern".into()));
        }
        let rule = match record.kind {
            RuleKind::Contains => ScriptRule::contains(record.pattern, record.reply),
            RuleKind::Regex => ScriptRule::regex(&record.pattern, record.reply).map_err(|e| err(e.to_string()))?,
        };
        rules.push(rule);
    }
    if rules.is_empty() {
        return Err(ScriptError::Empty);
    }
    Ok(rules)
}

/// Replays scripted replies and records every request it receives.
#[derive(Debug)]
pub struct ScriptedBackend {
    identity: String,
    rules: Vec<ScriptRule>,
    log: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new(identity: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        Self {
            identity: identity.into(),
            rules,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(identity: impl Into<String>, text: &str) -> Result<Self, ScriptError> {
        Ok(Self::new(identity, parse_script(text)?))
    }

    pub fn from_file(identity: impl Into<String>, path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_script(identity, &text)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// Snapshot of every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.log.lock().expect("request log poisoned").clone()
    }

    pub fn clear_requests(&self) {
        self.log.lock().expect("request log poisoned").clear();
    }
}

impl LlmBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        self.log.lock().expect("request log poisoned").push(request.clone());
        self.rules
            .iter()
            .find(|r| r.matcher.fires(&request.prompt))
            .map(|r| r.reply.clone())
            .ok_or_else(|| LlmError::ScriptMiss {
                template: request
                    .template
                    .or_else(|| PromptName::identify(&request.prompt))
                    .map_or_else(|| "unrecognized".to_string(), |n| n.to_string()),
            })
    }

    fn identity(&self) -> &str {
        &self.identity
    }
}
