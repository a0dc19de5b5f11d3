//! Answer scoring and the benchmark runner.

mod metrics;

use std::collections::HashSet;
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use metrics::{
    categorize, exact_match, f1, lcs_len, normalize_answer, rouge_l, rouge_l_max, rouge_l_tokens, Category,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
}

/// Read line-delimited `{"id", "question", "answers"}` records. Ids must be
/// unique and every record needs at least one answer.
pub fn load_dataset<R: BufRead>(source: R) -> Result<Vec<QaExample>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Dataset { line: idx + 1, message };
        let ex: QaExample = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if ex.gold_answers.is_empty() {
            return Err(err(format!("example {:?} has no answers", ex.id)));
        }
        if ex.question.trim().is_empty() {
            return Err(err(format!("example {:?} has an empty question", ex.id)));
        }
        if !ids.insert(ex.id.clone()) {
            return Err(err(format!("duplicate id {:?}", ex.id)));
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub question: String,
    pub prediction: String,
    pub gold_answers: Vec<String>,
    pub em: f64,
    pub f1: f64,
    pub rouge_l: f64,
    pub category: Category,
    pub latency_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExampleScore {
    pub fn score(example: &QaExample, prediction: &str, latency_secs: f64) -> Self {
        let golds = &example.gold_answers;
        Self {
            id: example.id.clone(),
            question: example.question.clone(),
            prediction: prediction.to_string(),
            gold_answers: golds.clone(),
            em: exact_match(prediction, golds),
            f1: f1(prediction, golds),
            rouge_l: rouge_l_max(prediction, golds),
            category: categorize(prediction, golds),
            latency_secs,
            error: None,
        }
    }

    /// A pipeline failure counts as a hallucination with zero scores.
    pub fn failed(example: &QaExample, error: String, latency_secs: f64) -> Self {
        Self {
            id: example.id.clone(),
            question: example.question.clone(),
            prediction: String::new(),
            gold_answers: example.gold_answers.clone(),
            em: 0.0,
            f1: 0.0,
            rouge_l: 0.0,
            category: Category::Hallucination,
            latency_secs,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge_l: f64,
    pub em: f64,
    pub f1: f64,
    pub correct_rate: f64,
    pub missing_rate: f64,
    pub hallucination_rate: f64,
    pub mean_latency: f64,
    pub per_example: Vec<ExampleScore>,
}

impl MetricReport {
    pub fn aggregate(per_example: Vec<ExampleScore>) -> Result<Self, EvalError> {
        if per_example.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let n = per_example.len() as f64;
        let mean = |f: fn(&ExampleScore) -> f64| per_example.iter().map(f).sum::<f64>() / n;
        let rate = |c: Category| per_example.iter().filter(|e| e.category == c).count() as f64 / n;
        Ok(Self {
            rouge_l: mean(|e| e.rouge_l),
            em: mean(|e| e.em),
            f1: mean(|e| e.f1),
            correct_rate: rate(Category::Correct),
            missing_rate: rate(Category::Missing),
            hallucination_rate: rate(Category::Hallucination),
            mean_latency: mean(|e| e.latency_secs),
            per_example,
        })
    }

    /// Fixed-width summary; latency is left out so reruns print identically.
    pub fn summary_table(&self) -> String {
        let rows = [
            ("examples", format!("{}", self.per_example.len())),
            ("rouge_l", format!("{:.4}", self.rouge_l)),
            ("em", format!("{:.4}", self.em)),
            ("f1", format!("{:.4}", self.f1)),
            ("correct", format!("{:.4}", self.correct_rate)),
            ("missing", format!("{:.4}", self.missing_rate)),
            ("hallucination", format!("{:.4}", self.hallucination_rate)),
        ];
        let mut out = format!("{:<14} {:>10}\n", "metric", "value");
        for (k, v) in rows {
            out.push_str(&format!("{k:<14} {v:>10}\n"));
        }
        out
    }
}

/// Run `pipeline` over every example with up to `workers` threads. Results
/// keep dataset order regardless of worker count; individual failures are
/// scored as hallucinations and never abort the batch.
pub fn run_benchmark<F, E>(dataset: &[QaExample], pipeline: F, workers: usize) -> Result<MetricReport, EvalError>
where
    F: Fn(&str) -> Result<String, E> + Sync,
    E: std::fmt::Display,
{
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let slots: Mutex<Vec<Option<ExampleScore>>> = Mutex::new(vec![None; dataset.len()]);
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, dataset.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(example) = dataset.get(i) else { break };
                let started = Instant::now();
                let outcome = pipeline(&example.question);
                let latency = started.elapsed().as_secs_f64();
                let score = match outcome {
                    Ok(pred) => ExampleScore::score(example, &pred, latency),
                    Err(e) => ExampleScore::failed(example, e.to_string(), latency),
                };
                slots.lock().expect("result slots poisoned")[i] = Some(score);
            });
        }
    });
    let scores = slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|s| s.expect("every example scored"))
        .collect();
    MetricReport::aggregate(scores)
}
