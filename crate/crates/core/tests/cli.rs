mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{fixture, QUESTION};
use kgqa::trace::{load_trace, read_trace, TraceRecord};

fn kgqa() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kgqa"));
    for (k, _) in std::env::vars() {
        if k.starts_with("COGGRAG_") {
            c.env_remove(k);
        }
    }
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ask(extra: &[&str], trace: Option<&Path>) -> Output {
    let mut c = kgqa();
    c.args(["ask", "--graph"])
        .arg(fixture("beckham.tsv"))
        .arg("--script")
        .arg(fixture("beckham.script.jsonl"))
        .args(["--question", QUESTION])
        .args(extra);
    if let Some(t) = trace {
        c.arg("--trace").arg(t);
    }
    c.output().unwrap()
}

fn header_config(trace: &Path) -> kgqa::PipelineConfig {
    let records = read_trace(std::fs::read(trace).unwrap().as_slice()).unwrap();
    match &records[0] {
        TraceRecord::Header { config, .. } => config.clone(),
        other => panic!("first record is {other:?}"),
    }
}

#[test]
fn ingest_reports_counts() {
    let o = kgqa()
        .args(["ingest", "--graph"])
        .arg(fixture("beckham.tsv"))
        .output()
        .unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("triples: 3\n"), "{out}");
    assert!(out.contains("entities: 4\n"), "{out}");
}

#[test]
fn ingest_malformed_names_the_line() {
    let o = kgqa()
        .args(["ingest", "--graph"])
        .arg(fixture("malformed.tsv"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line 2"), "{err}");
    assert!(stdout(&o).is_empty());
}

#[test]
fn missing_file_and_unknown_flag_fail_on_one_line() {
    let o = kgqa()
        .args(["ingest", "--graph", "/no/such/graph.tsv"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));

    let o = kgqa().args(["ingest", "--graph", "x", "--bogus"]).output().unwrap();
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));

    let o = kgqa().output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn help_succeeds() {
    let o = kgqa().arg("--help").output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("ask"));
}

#[test]
fn ask_prints_the_answer_recorded_in_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let o = ask(&[], Some(&t));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "1986–2013\n");
    let loaded = load_trace(read_trace(std::fs::read(&t).unwrap().as_slice()).unwrap()).unwrap();
    assert_eq!(format!("{}\n", loaded.reasoning.final_answer), stdout(&o));
    assert_eq!(loaded.question, QUESTION);
}

#[test]
fn ask_ablation_flags_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let o = ask(
        &["--no-decomposition", "--no-global-keys", "--no-verification"],
        Some(&t),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "1986–2013\n");
    let cfg = header_config(&t);
    assert!(!cfg.decomposition_enabled && !cfg.global_keys_enabled && !cfg.verification_enabled);
    let loaded = load_trace(read_trace(std::fs::read(&t).unwrap().as_slice()).unwrap()).unwrap();
    assert_eq!(loaded.mind_map.len(), 1);
    assert!(loaded.keys.global.is_empty());
    assert_eq!(loaded.reasoning.verify_calls, 0);
}

#[test]
fn unscripted_question_fails_with_stage_label() {
    let o = kgqa()
        .args(["ask", "--graph"])
        .arg(fixture("beckham.tsv"))
        .arg("--script")
        .arg(fixture("beckham.script.jsonl"))
        .args(["--question", "Who won the 1966 World Cup?"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("decomposition"), "{err}");
}

#[test]
fn config_precedence_file_then_env_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "# test config\nepsilon = 0.5\nhops = 2\nmax_depth = 2\n").unwrap();
    let t = dir.path().join("t.jsonl");
    let run = |env: &[(&str, &str)], flags: &[&str]| {
        let mut c = kgqa();
        c.args(["ask", "--graph"])
            .arg(fixture("beckham.tsv"))
            .arg("--script")
            .arg(fixture("beckham.script.jsonl"))
            .args(["--question", QUESTION, "--trace"])
            .arg(&t)
            .args(flags);
        for (k, v) in env {
            c.env(k, v);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        header_config(&t)
    };
    let path = cfg_path.to_str().unwrap();

    let c = run(&[], &["--config", path]);
    assert_eq!((c.epsilon, c.hops, c.max_depth), (0.5, 2, 2));

    let c = run(&[("COGGRAG_CONFIG", path)], &[]);
    assert_eq!((c.epsilon, c.hops), (0.5, 2));

    let c = run(&[("COGGRAG_CONFIG", path), ("COGGRAG_EPSILON", "0.6")], &[]);
    assert_eq!((c.epsilon, c.hops), (0.6, 2));

    let c = run(
        &[("COGGRAG_EPSILON", "0.6")],
        &["--config", path, "--epsilon", "0.65", "--set", "hops=3"],
    );
    assert_eq!((c.epsilon, c.hops, c.max_depth), (0.65, 3, 2));
}

#[test]
fn invalid_config_is_rejected() {
    let o = ask(&["--epsilon", "1.5"], None);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));

    let o = ask(&["--set", "no_such_key=1"], None);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn bench_reports_rates_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |report: &Path, workers: &str| {
        kgqa()
            .args(["bench", "--graph"])
            .arg(fixture("beckham.tsv"))
            .arg("--dataset")
            .arg(fixture("beckham.dataset.jsonl"))
            .arg("--script")
            .arg(fixture("beckham.script.jsonl"))
            .arg("--report")
            .arg(report)
            .args(["--workers", workers])
            .output()
            .unwrap()
    };
    let r1 = dir.path().join("r1.jsonl");
    let a = run(&r1, "1");
    let b = run(&dir.path().join("r2.jsonl"), "2");
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    let table = stdout(&a);
    let value = |name: &str| -> f64 {
        let line = table.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert_eq!(value("examples"), 2.0);
    assert_eq!(value("correct"), 0.5);
    let sum = value("correct") + value("missing") + value("hallucination");
    assert!((sum - 1.0).abs() < 1e-9, "{table}");

    let report = std::fs::read_to_string(&r1).unwrap();
    let rows: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["id"], "beckham");
    assert_eq!(rows[0]["category"], "Correct");
    // the second question has no script and fails; it is scored, not fatal
    assert_eq!(rows[1]["category"], "Hallucination");
    assert!(rows[1]["error"].as_str().unwrap().contains("decomposition"));
}

#[test]
fn script_check() {
    let o = kgqa()
        .args(["script-check", "--script"])
        .arg(fixture("beckham.script.jsonl"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o), "rules: 8\n");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"match\": \"x\", \"reply\": \"y\"}\n{\"match\": \"(\", \"reply\": \"y\", \"kind\": \"regex\"}\n",
    )
    .unwrap();
    let o = kgqa().args(["script-check", "--script"]).arg(&bad).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
