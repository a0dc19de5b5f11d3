//! C interface to the kgqa engine.
//!
//! Graphs and engines are opaque handles created and freed through this
//! module. Every fallible call returns a [`KgqaStatus`]; on failure the
//! message is available from [`kgqa_last_error`] on the same thread.
//! Strings handed out by the library must be released with
//! [`kgqa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use kgqa::eval::{categorize, exact_match, f1, rouge_l_max, Category};
use kgqa::llm::{LlmBackend, ScriptedBackend};
use kgqa::pipeline::{build_embedder, run_pipeline, BackendSet, Backends};
use kgqa::retrieval::Embedder;
use kgqa::trace::{trace_records, write_trace, BackendLabels};
use kgqa::{load_graph, load_graph_file, KnowledgeGraph, PipelineConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgqaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Backend = 5,
    Pipeline = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgqaCategory {
    Correct = 0,
    Missing = 1,
    Hallucination = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgqaScore {
    pub em: f64,
    pub f1: f64,
    pub rouge_l: f64,
    pub category: KgqaCategory,
}

/// A loaded triple graph.
pub struct KgqaGraph {
    graph: KnowledgeGraph,
}

/// A graph bound to a configuration and its model backends.
pub struct KgqaEngine {
    graph: KnowledgeGraph,
    config: PipelineConfig,
    res: Arc<dyn LlmBackend>,
    ver: Arc<dyn LlmBackend>,
    embedder: Arc<dyn Embedder>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(KgqaStatus, String);

fn guard<F>(f: F) -> KgqaStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KgqaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KgqaStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KgqaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(KgqaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(KgqaStatus::Pipeline, "output contains a NUL byte".into()))
}

fn null_out(what: &str) -> Failure {
    Failure(KgqaStatus::NullArgument, format!("{what} is null"))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn kgqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn kgqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse tab-separated triples from `source`.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kgqa_graph_from_str(source: *const c_char, out: *mut *mut KgqaGraph) -> KgqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        let src = text(source, "source")?;
        let graph = load_graph(src.as_bytes()).map_err(|e| Failure(KgqaStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(KgqaGraph { graph }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kgqa_graph_from_file(path: *const c_char, out: *mut *mut KgqaGraph) -> KgqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        let p = text(path, "path")?;
        let graph = load_graph_file(Path::new(p)).map_err(|e| match e {
            kgqa::kg_store::KgError::Io(_) => Failure(KgqaStatus::Io, format!("{p}: {e}")),
            other => Failure(KgqaStatus::Parse, format!("{p}: {other}")),
        })?;
        *out = Box::into_raw(Box::new(KgqaGraph { graph }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgqa_graph_triple_count(graph: *const KgqaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.triple_count())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgqa_graph_entity_count(graph: *const KgqaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.entity_count())
}

/// # Safety
/// `graph` must be null or a handle from `kgqa_graph_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgqa_graph_free(graph: *mut KgqaGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Build an engine over a copy of `graph`.
///
/// `config` is optional `key = value` text. When `script` is given it serves
/// every model role; otherwise the backends named by the config are used.
///
/// # Safety
/// `graph` must be a live handle; `config` and `script` null or
/// NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kgqa_engine_new(
    graph: *const KgqaGraph,
    config: *const c_char,
    script: *const c_char,
    out: *mut *mut KgqaEngine,
) -> KgqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        let g = graph.as_ref().ok_or_else(|| null_out("graph"))?;
        let mut cfg = PipelineConfig::default();
        if !config.is_null() {
            cfg.apply_text(text(config, "config")?)
                .map_err(|e| Failure(KgqaStatus::Config, e.to_string()))?;
        }
        cfg.validate().map_err(|e| Failure(KgqaStatus::Config, e.to_string()))?;
        let backend_err = |e: kgqa::pipeline::BackendSetupError| Failure(KgqaStatus::Backend, e.to_string());
        let engine = if script.is_null() {
            let set = BackendSet::from_config(&cfg).map_err(backend_err)?;
            KgqaEngine {
                graph: g.graph.clone(),
                config: cfg,
                res: set.res,
                ver: set.ver,
                embedder: set.embedder,
            }
        } else {
            let backend = ScriptedBackend::from_script("script", text(script, "script")?)
                .map_err(|e| Failure(KgqaStatus::Parse, e.to_string()))?;
            let shared: Arc<dyn LlmBackend> = Arc::new(backend);
            KgqaEngine {
                graph: g.graph.clone(),
                embedder: build_embedder(&cfg).map_err(backend_err)?,
                config: cfg,
                res: shared.clone(),
                ver: shared,
            }
        };
        *out = Box::into_raw(Box::new(engine));
        Ok(())
    })
}

/// Answer `question`. The answer is written to `answer`; when `trace` is
/// non-null the line-delimited JSON trace is written there too. Both strings
/// belong to the caller.
///
/// # Safety
/// `engine` must be a live handle, `question` NUL-terminated, `answer`
/// writable and `trace` null or writable.
#[no_mangle]
pub unsafe extern "C" fn kgqa_engine_ask(
    engine: *const KgqaEngine,
    question: *const c_char,
    answer: *mut *mut c_char,
    trace: *mut *mut c_char,
) -> KgqaStatus {
    guard(|| {
        if answer.is_null() {
            return Err(null_out("answer"));
        }
        let e = engine.as_ref().ok_or_else(|| null_out("engine"))?;
        let q = text(question, "question")?;
        let backends = Backends {
            res: e.res.as_ref(),
            ver: e.ver.as_ref(),
            embedder: e.embedder.as_ref(),
        };
        let result = run_pipeline(q, &e.graph, &e.config, backends)
            .map_err(|err| Failure(KgqaStatus::Pipeline, err.to_string()))?;
        let trace_text = if trace.is_null() {
            None
        } else {
            let labels = BackendLabels {
                res: e.res.identity().to_string(),
                ver: e.ver.identity().to_string(),
            };
            let records = trace_records(&result, &e.config, &e.graph.digest(), labels);
            let mut buf = Vec::new();
            write_trace(&mut buf, &records).map_err(|err| Failure(KgqaStatus::Io, err.to_string()))?;
            Some(String::from_utf8(buf).map_err(|_| Failure(KgqaStatus::InvalidUtf8, "trace is not UTF-8".into()))?)
        };
        let a = out_string(result.final_answer().to_string())?;
        match trace_text.map(out_string).transpose() {
            Ok(t) => {
                *answer = a;
                if let Some(t) = t {
                    *trace = t;
                }
                Ok(())
            }
            Err(f) => {
                kgqa_string_free(a);
                Err(f)
            }
        }
    })
}

/// # Safety
/// `engine` must be null or a handle from `kgqa_engine_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgqa_engine_free(engine: *mut KgqaEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Score `prediction` against `gold_count` gold answers.
///
/// # Safety
/// `prediction` must be NUL-terminated, `golds` must point to `gold_count`
/// NUL-terminated strings and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgqa_score(
    prediction: *const c_char,
    golds: *const *const c_char,
    gold_count: usize,
    out: *mut KgqaScore,
) -> KgqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        let pred = text(prediction, "prediction")?;
        if golds.is_null() || gold_count == 0 {
            return Err(null_out("golds"));
        }
        let golds: Vec<&str> = std::slice::from_raw_parts(golds, gold_count)
            .iter()
            .map(|&g| text(g, "gold answer"))
            .collect::<Result<_, _>>()?;
        *out = KgqaScore {
            em: exact_match(pred, &golds),
            f1: f1(pred, &golds),
            rouge_l: rouge_l_max(pred, &golds),
            category: match categorize(pred, &golds) {
                Category::Correct => KgqaCategory::Correct,
                Category::Missing => KgqaCategory::Missing,
                Category::Hallucination => KgqaCategory::Hallucination,
            },
        };
        Ok(())
    })
}
