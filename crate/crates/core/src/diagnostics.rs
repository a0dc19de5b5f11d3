//! Non-fatal warnings collected while a question moves through the pipeline.

use serde::{Deserialize, Serialize};

/// Pipeline stage a warning or error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decomposition,
    Extraction,
    Retrieval,
    Reasoning,
    Verification,
    Rethink,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Decomposition => "decomposition",
            Stage::Extraction => "extraction",
            Stage::Retrieval => "retrieval",
            Stage::Reasoning => "reasoning",
            Stage::Verification => "verification",
            Stage::Rethink => "rethink",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: Stage,
    /// Mind-map node the warning concerns, when there is one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<String>,
    pub message: String,
}

/// Ordered warning log. Order follows emission order, so a deterministic run
/// produces a deterministic log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Warnings(Vec<Warning>);

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: Stage, message: impl Into<String>) {
        self.0.push(Warning {
            stage,
            node: None,
            message: message.into(),
        });
    }

    pub fn push_for_node(&mut self, stage: Stage, node: &str, message: impl Into<String>) {
        self.0.push(Warning {
            stage,
            node: Some(node.to_string()),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: Warnings) {
        self.0.extend(other.0);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Warning> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn any_from(&self, stage: Stage) -> bool {
        self.0.iter().any(|w| w.stage == stage)
    }
}
