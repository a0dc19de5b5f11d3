//! End-to-end orchestration: decompose, extract keys, retrieve evidence,
//! reason.

use std::path::Path;
use std::sync::Arc;

use crate::config::{BackendSpec, ConfigError, EmbedderSpec, PipelineConfig};
use crate::diagnostics::Warnings;
use crate::extraction::{extract_global_keys, extract_local_keys, KeySet};
use crate::kg_store::KnowledgeGraph;
use crate::llm::http::HttpConfig;
use crate::llm::{HttpBackend, LlmBackend, LlmError, ScriptError, ScriptedBackend};
use crate::mindmap::{build_mind_map, MindMap};
use crate::reasoning::{solve, ReasoningError, ReasoningTrace};
use crate::retrieval::{
    retrieve, EmbedError, Embedder, HashedEmbedder, HttpEmbedder, RetrievalError, RetrievedTripleSet,
};

/// The three handles a run needs. `res` also serves decomposition and
/// extraction calls.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub res: &'a dyn LlmBackend,
    pub ver: &'a dyn LlmBackend,
    pub embedder: &'a dyn Embedder,
}

/// Owned backends built from a [`PipelineConfig`].
pub struct BackendSet {
    pub res: Arc<dyn LlmBackend>,
    pub ver: Arc<dyn LlmBackend>,
    pub embedder: Arc<dyn Embedder>,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendSetupError {
    #[error("loading script {path}: {source}")]
    Script { path: String, source: ScriptError },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl BackendSet {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, BackendSetupError> {
        fn llm(spec: &BackendSpec, role: &str, cfg: &PipelineConfig) -> Result<Arc<dyn LlmBackend>, BackendSetupError> {
            Ok(match spec {
                BackendSpec::Script(path) => Arc::new(
                    ScriptedBackend::from_file(format!("script:{role}"), Path::new(path)).map_err(|source| {
                        BackendSetupError::Script {
                            path: path.clone(),
                            source,
                        }
                    })?,
                ),
                BackendSpec::Http => Arc::new(HttpBackend::new(HttpConfig::from_env()?, cfg.llm_model.clone())?),
            })
        }
        let res = llm(&cfg.res_backend, "res", cfg)?;
        // one script file serving both roles is loaded once
        let ver = if cfg.ver_backend == cfg.res_backend && matches!(cfg.res_backend, BackendSpec::Script(_)) {
            res.clone()
        } else {
            llm(&cfg.ver_backend, "ver", cfg)?
        };
        Ok(Self {
            res,
            ver,
            embedder: build_embedder(cfg)?,
        })
    }

    pub fn handles(&self) -> Backends<'_> {
        Backends {
            res: self.res.as_ref(),
            ver: self.ver.as_ref(),
            embedder: self.embedder.as_ref(),
        }
    }
}

pub fn build_embedder(cfg: &PipelineConfig) -> Result<Arc<dyn Embedder>, BackendSetupError> {
    Ok(match cfg.embedder {
        EmbedderSpec::Hashed => Arc::new(HashedEmbedder::new(cfg.embed_dimension)),
        EmbedderSpec::Http => Arc::new(HttpEmbedder::new(
            HttpConfig::from_env()?,
            cfg.embed_model.clone(),
            cfg.embed_dimension,
        )?),
    })
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub question: String,
    pub mind_map: MindMap,
    pub keys: KeySet,
    pub retrieval: RetrievedTripleSet,
    pub reasoning: ReasoningTrace,
    /// Warnings from decomposition, extraction and retrieval. Reasoning
    /// warnings live in `reasoning.warnings`.
    pub warnings: Warnings,
}

impl PipelineTrace {
    pub fn final_answer(&self) -> &str {
        &self.reasoning.final_answer
    }
}

/// What had been produced when a stage failed.
#[derive(Debug, Clone, Default)]
pub struct PartialTrace {
    pub mind_map: Option<MindMap>,
    pub keys: Option<KeySet>,
    pub retrieval: Option<RetrievedTripleSet>,
    pub reasoning: Option<ReasoningTrace>,
    pub warnings: Warnings,
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
    pub partial: Box<PartialTrace>,
}

/// Answer one question against `graph`.
///
/// Ablation switches: without decomposition the map is the bare question;
/// without global keys only local extraction runs; without verification
/// every candidate is accepted as is.
pub fn run_pipeline(
    question: &str,
    graph: &KnowledgeGraph,
    cfg: &PipelineConfig,
    backends: Backends<'_>,
) -> Result<PipelineTrace, PipelineError> {
    let mut partial = PartialTrace::default();
    let fail = |stage: &'static str, source: StageError, partial: PartialTrace| PipelineError {
        stage,
        source,
        partial: Box::new(partial),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail("config", e.into(), partial));
    }

    let mind_map = if cfg.decomposition_enabled {
        match build_mind_map(question, backends.res, &cfg.decomposition(), &mut partial.warnings) {
            Ok(m) => m,
            Err(e) => return Err(fail("decomposition", e.into(), partial)),
        }
    } else {
        MindMap::single(question)
    };
    partial.mind_map = Some(mind_map.clone());

    let ext = cfg.extraction();
    let mut local = match extract_local_keys(&mind_map, backends.res, &ext, &mut partial.warnings) {
        Ok(k) => k,
        Err(e) => return Err(fail("extraction", e.into(), partial)),
    };
    let mut global = Vec::new();
    if cfg.global_keys_enabled {
        match extract_global_keys(&mind_map, backends.res, &ext, &mut partial.warnings) {
            Ok(g) => {
                local.extend(g.demoted);
                global = g.subgraphs;
            }
            Err(e) => return Err(fail("extraction", e.into(), partial)),
        }
    }
    let keys = KeySet::new(local, global);
    partial.keys = Some(keys.clone());

    let retrieval = match retrieve(graph, &keys, backends.embedder, &cfg.retrieval()) {
        Ok(r) => r,
        Err(e) => return Err(fail("retrieval", e.into(), partial)),
    };
    partial.retrieval = Some(retrieval.clone());

    let reasoning = match solve(&mind_map, &retrieval, backends.res, backends.ver, &cfg.reasoning()) {
        Ok(t) => t,
        Err(e) => {
            partial.reasoning = Some(*e.partial);
            return Err(fail("reasoning", e.source.into(), partial));
        }
    };

    Ok(PipelineTrace {
        question: question.to_string(),
        mind_map,
        keys,
        retrieval,
        reasoning,
        warnings: partial.warnings,
    })
}
