//! Line-delimited JSON trace files.
//!
//! A trace is a `header` record, the nested `mind_map`, the `keys`, the
//! `retrieval` set, one `node` record per reasoning step in processing order,
//! and a closing `final` record. Nothing time-dependent is written, so equal
//! runs produce byte-identical traces.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::diagnostics::Warnings;
use crate::extraction::{Key, KeySet};
use crate::mindmap::{MindMap, MindMapError, NestedNode};
use crate::pipeline::PipelineTrace;
use crate::reasoning::{NodeRecord, ReasoningTrace};
use crate::retrieval::{RetrievedTripleSet, ScoredTriple};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendLabels {
    pub res: String,
    pub ver: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        question: String,
        graph_digest: String,
        backends: BackendLabels,
        config: PipelineConfig,
    },
    MindMap {
        root: NestedNode,
    },
    Keys {
        local: Vec<Key>,
        global: Vec<Key>,
    },
    Retrieval {
        candidate_count: usize,
        epsilon: f64,
        kept: Vec<ScoredTriple>,
    },
    Node(NodeRecord),
    Final {
        answer: String,
        answer_calls: usize,
        verify_calls: usize,
        rethink_calls: usize,
        warnings: Warnings,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace is missing its {0} record")]
    Missing(&'static str),
    #[error(transparent)]
    MindMap(#[from] MindMapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn trace_records(
    trace: &PipelineTrace,
    config: &PipelineConfig,
    graph_digest: &str,
    backends: BackendLabels,
) -> Vec<TraceRecord> {
    let mut warnings = trace.warnings.clone();
    warnings.extend(trace.reasoning.warnings.clone());
    let mut out = vec![
        TraceRecord::Header {
            question: trace.question.clone(),
            graph_digest: graph_digest.to_string(),
            backends,
            config: config.clone(),
        },
        TraceRecord::MindMap {
            root: trace.mind_map.to_nested(),
        },
        TraceRecord::Keys {
            local: trace.keys.local.clone(),
            global: trace.keys.global.clone(),
        },
        TraceRecord::Retrieval {
            candidate_count: trace.retrieval.candidate_count,
            epsilon: trace.retrieval.epsilon,
            kept: trace.retrieval.kept.clone(),
        },
    ];
    out.extend(trace.reasoning.records.iter().cloned().map(TraceRecord::Node));
    out.push(TraceRecord::Final {
        answer: trace.reasoning.final_answer.clone(),
        answer_calls: trace.reasoning.answer_calls,
        verify_calls: trace.reasoning.verify_calls,
        rethink_calls: trace.reasoning.rethink_calls,
        warnings,
    });
    out
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(source: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Pieces of a parsed trace file.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub question: String,
    pub config: PipelineConfig,
    pub mind_map: MindMap,
    pub keys: KeySet,
    pub retrieval: RetrievedTripleSet,
    pub reasoning: ReasoningTrace,
}

pub fn load_trace(records: Vec<TraceRecord>) -> Result<LoadedTrace, TraceError> {
    let mut header = None;
    let mut map = None;
    let mut keys = None;
    let mut retrieval = None;
    let mut reasoning = ReasoningTrace::default();
    let mut finished = false;
    for r in records {
        match r {
            TraceRecord::Header { question, config, .. } => header = Some((question, config)),
            TraceRecord::MindMap { root } => map = Some(MindMap::from_nested(&root)?),
            TraceRecord::Keys { local, global } => keys = Some(KeySet { local, global }),
            TraceRecord::Retrieval {
                candidate_count,
                epsilon,
                kept,
            } => {
                retrieval = Some(RetrievedTripleSet {
                    kept,
                    candidate_count,
                    epsilon,
                })
            }
            TraceRecord::Node(n) => reasoning.records.push(n),
            TraceRecord::Final {
                answer,
                answer_calls,
                verify_calls,
                rethink_calls,
                warnings,
            } => {
                reasoning.final_answer = answer;
                reasoning.answer_calls = answer_calls;
                reasoning.verify_calls = verify_calls;
                reasoning.rethink_calls = rethink_calls;
                reasoning.warnings = warnings;
                finished = true;
            }
        }
    }
    let (question, config) = header.ok_or(TraceError::Missing("header"))?;
    if !finished {
        return Err(TraceError::Missing("final"));
    }
    Ok(LoadedTrace {
        question,
        config,
        mind_map: map.ok_or(TraceError::Missing("mind_map"))?,
        keys: keys.ok_or(TraceError::Missing("keys"))?,
        retrieval: retrieval.ok_or(TraceError::Missing("retrieval"))?,
        reasoning,
    })
}
