use std::ffi::{CStr, CString};
use std::ptr;

use kgqa_ffi::*;

const GRAPH: &str = include_str!("../../core/tests/fixtures/beckham.tsv");
const SCRIPT: &str = include_str!("../../core/tests/fixtures/beckham.script.jsonl");
const QUESTION: &str =
    "The football manager who recruited David Beckham managed Manchester United during what timeframe?";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = kgqa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn graph() -> *mut KgqaGraph {
    let mut g = ptr::null_mut();
    let src = c(GRAPH);
    assert_eq!(unsafe { kgqa_graph_from_str(src.as_ptr(), &mut g) }, KgqaStatus::Ok);
    g
}

#[test]
fn graph_counts() {
    let g = graph();
    unsafe {
        assert_eq!(kgqa_graph_triple_count(g), 3);
        assert_eq!(kgqa_graph_entity_count(g), 4);
        kgqa_graph_free(g);
        assert_eq!(kgqa_graph_triple_count(ptr::null()), 0);
        kgqa_graph_free(ptr::null_mut());
    }
}

#[test]
fn parse_error_names_the_line() {
    let mut g = ptr::null_mut();
    let src = c("a\tb\tc\nbroken line\n");
    assert_eq!(unsafe { kgqa_graph_from_str(src.as_ptr(), &mut g) }, KgqaStatus::Parse);
    assert!(g.is_null());
    assert!(last_error().contains("line 2"), "{}", last_error());
}

#[test]
fn missing_file_is_io() {
    let mut g = ptr::null_mut();
    let p = c("/nonexistent/graph.tsv");
    assert_eq!(unsafe { kgqa_graph_from_file(p.as_ptr(), &mut g) }, KgqaStatus::Io);
}

#[test]
fn null_arguments_are_rejected() {
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(kgqa_graph_from_str(ptr::null(), &mut g), KgqaStatus::NullArgument);
        let src = c(GRAPH);
        assert_eq!(
            kgqa_graph_from_str(src.as_ptr(), ptr::null_mut()),
            KgqaStatus::NullArgument
        );
        let mut e = ptr::null_mut();
        assert_eq!(
            kgqa_engine_new(ptr::null(), ptr::null(), ptr::null(), &mut e),
            KgqaStatus::NullArgument
        );
    }
}

#[test]
fn invalid_utf8_is_reported() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut g = ptr::null_mut();
    let status = unsafe { kgqa_graph_from_str(bytes.as_ptr().cast(), &mut g) };
    assert_eq!(status, KgqaStatus::InvalidUtf8);
}

#[test]
fn ask_with_script_returns_answer_and_trace() {
    let g = graph();
    let script = c(SCRIPT);
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(kgqa_engine_new(g, ptr::null(), script.as_ptr(), &mut e), KgqaStatus::Ok);
        // the engine owns a copy of the graph
        kgqa_graph_free(g);
        let q = c(QUESTION);
        let mut answer = ptr::null_mut();
        let mut trace = ptr::null_mut();
        assert_eq!(kgqa_engine_ask(e, q.as_ptr(), &mut answer, &mut trace), KgqaStatus::Ok);
        assert_eq!(CStr::from_ptr(answer).to_str().unwrap(), "1986–2013");
        let t = CStr::from_ptr(trace).to_str().unwrap().to_string();
        assert_eq!(t.lines().count(), 8);
        assert!(t.lines().last().unwrap().contains("\"answer\":\"1986–2013\""));
        kgqa_string_free(answer);
        kgqa_string_free(trace);

        let mut answer = ptr::null_mut();
        assert_eq!(
            kgqa_engine_ask(e, q.as_ptr(), &mut answer, ptr::null_mut()),
            KgqaStatus::Ok
        );
        kgqa_string_free(answer);
        kgqa_engine_free(e);
    }
}

#[test]
fn unscripted_question_fails_with_pipeline_status() {
    let g = graph();
    let script = c(SCRIPT);
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(kgqa_engine_new(g, ptr::null(), script.as_ptr(), &mut e), KgqaStatus::Ok);
        let q = c("Who won the 1966 World Cup?");
        let mut answer = ptr::null_mut();
        assert_eq!(
            kgqa_engine_ask(e, q.as_ptr(), &mut answer, ptr::null_mut()),
            KgqaStatus::Pipeline
        );
        assert!(answer.is_null());
        assert!(last_error().contains("decomposition"), "{}", last_error());
        kgqa_engine_free(e);
        kgqa_graph_free(g);
    }
}

#[test]
fn bad_config_is_rejected() {
    let g = graph();
    let cfg = c("epsilon = 2.5\n");
    let script = c(SCRIPT);
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(
            kgqa_engine_new(g, cfg.as_ptr(), script.as_ptr(), &mut e),
            KgqaStatus::Config
        );
        let cfg = c("no_such_key = 1\n");
        assert_eq!(
            kgqa_engine_new(g, cfg.as_ptr(), script.as_ptr(), &mut e),
            KgqaStatus::Config
        );
        assert!(e.is_null());
        kgqa_graph_free(g);
    }
}

#[test]
fn scoring() {
    let golds = [c("Paris"), c("the city of Paris")];
    let ptrs: Vec<_> = golds.iter().map(|g| g.as_ptr()).collect();
    let mut s = KgqaScore {
        em: -1.0,
        f1: -1.0,
        rouge_l: -1.0,
        category: KgqaCategory::Hallucination,
    };
    unsafe {
        let p = c("paris");
        assert_eq!(
            kgqa_score(p.as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut s),
            KgqaStatus::Ok
        );
        assert_eq!(
            (s.em, s.f1, s.rouge_l, s.category),
            (1.0, 1.0, 1.0, KgqaCategory::Correct)
        );
        let p = c("I don't know");
        assert_eq!(
            kgqa_score(p.as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut s),
            KgqaStatus::Ok
        );
        assert_eq!(s.category, KgqaCategory::Missing);
        assert_eq!(
            kgqa_score(p.as_ptr(), ptrs.as_ptr(), 0, &mut s),
            KgqaStatus::NullArgument
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/kgqa.h");
    for name in [
        "kgqa_last_error",
        "kgqa_string_free",
        "kgqa_graph_from_str",
        "kgqa_graph_from_file",
        "kgqa_graph_triple_count",
        "kgqa_graph_entity_count",
        "kgqa_graph_free",
        "kgqa_engine_new",
        "kgqa_engine_ask",
        "kgqa_engine_free",
        "kgqa_score",
        "KGQA_STATUS_OK",
        "typedef struct KgqaEngine KgqaEngine",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
