//! Question answering over a triple store: a question is decomposed into a
//! tree of sub-questions, keys extracted from the tree select evidence from
//! the graph, and the tree is answered bottom-up with a verify and rethink
//! step per node.

pub mod config;
pub mod diagnostics;
pub mod eval;
pub mod extraction;
pub mod kg_store;
pub mod llm;
pub mod mindmap;
pub mod pipeline;
pub mod reasoning;
pub mod retrieval;
pub mod trace;

pub use config::PipelineConfig;
pub use kg_store::{load_graph, load_graph_file, KnowledgeGraph, Triple};
pub use pipeline::{run_pipeline, BackendSet, Backends, PipelineError, PipelineTrace};
