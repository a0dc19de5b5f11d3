#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use kgqa::extraction::{Key, KeyKind, KeySet};
use kgqa::llm::{GenerationRequest, PromptName, ScriptRule, ScriptedBackend};
use kgqa::{load_graph, KnowledgeGraph, Triple};

pub const QUESTION: &str =
    "The football manager who recruited David Beckham managed Manchester United during what timeframe?";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn beckham_graph() -> KnowledgeGraph {
    load_graph(std::fs::read(fixture("beckham.tsv")).unwrap().as_slice()).unwrap()
}

pub fn beckham_script() -> ScriptedBackend {
    ScriptedBackend::from_file("golden", &fixture("beckham.script.jsonl")).unwrap()
}

/// Question text bound to the final `Input:` section of a prompt.
pub fn input_of(prompt: &str) -> &str {
    let start = prompt.rfind("\n\nInput: ").expect("prompt has an input section") + "\n\nInput: ".len();
    prompt[start..]
        .strip_suffix("\n\nOutput:")
        .expect("prompt ends with Output:")
}

pub fn of_template(log: &[GenerationRequest], t: PromptName) -> Vec<&GenerationRequest> {
    log.iter().filter(|r| r.template == Some(t)).collect()
}

/// Decomposition reply listing `subs` with the given states.
pub fn decomposition(subs: &[(&str, &str)]) -> String {
    let items: Vec<String> = subs
        .iter()
        .map(|(q, s)| format!("{{\"Sub-question\": \"{q}\", \"State\": \"{s}\"}}"))
        .collect();
    format!("[{}]", items.join(", "))
}

/// Rule firing on prompts of template `t` whose input section is `input`.
pub fn on(t: PromptName, input: &str, reply: &str) -> ScriptRule {
    let head = regex::escape(&t.template().head[..40]);
    let pattern = format!("(?s)^{head}.*\n\nInput: {}\n\nOutput:$", regex::escape(input));
    ScriptRule::regex(&pattern, reply).unwrap()
}

pub fn on_any(t: PromptName, reply: &str) -> ScriptRule {
    let head = regex::escape(&t.template().head[..40]);
    ScriptRule::regex(&format!("^{head}"), reply).unwrap()
}

/// Reference implementation of the hashed bag-of-tokens embedding, kept
/// apart from the library so retrieval can be checked against it.
pub mod oracle {
    use super::*;

    pub const DIM: u64 = 256;

    fn fnv(bytes: &[u8]) -> u64 {
        bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        })
    }

    pub fn counts(text: &str) -> BTreeMap<u64, i64> {
        let mut out = BTreeMap::new();
        let mut token = String::new();
        for c in text.chars().chain(std::iter::once(' ')) {
            if c.is_alphanumeric() {
                token.extend(c.to_lowercase());
            } else if !token.is_empty() {
                *out.entry(fnv(token.as_bytes()) % DIM).or_insert(0) += 1;
                token.clear();
            }
        }
        out
    }

    fn sq(v: &BTreeMap<u64, i64>) -> i64 {
        v.values().map(|c| c * c).sum()
    }

    pub fn cosine(a: &str, b: &str) -> f64 {
        let (x, y) = (counts(a), counts(b));
        let dot: i64 = x.iter().filter_map(|(k, c)| y.get(k).map(|d| c * d)).sum();
        if dot == 0 {
            return 0.0;
        }
        dot as f64 / ((sq(&x) as f64).sqrt() * (sq(&y) as f64).sqrt())
    }

    /// cos(a, b) > num/den decided in integers.
    pub fn exceeds(a: &str, b: &str, num: i64, den: i64) -> bool {
        let (x, y) = (counts(a), counts(b));
        let dot: i64 = x.iter().filter_map(|(k, c)| y.get(k).map(|d| c * d)).sum();
        dot > 0 && (dot * dot) * (den * den) > (num * num) * sq(&x) * sq(&y)
    }

    pub fn key_text(key: &Key) -> String {
        let t = |h: &str, r: &str, o: &str| format!("{h} {r} {o}");
        match &key.kind {
            KeyKind::Entity { mention } => mention.clone(),
            KeyKind::Pair { mention, relation } => format!("{mention} {relation}"),
            KeyKind::Triple(k) => t(&k.head, &k.relation, &k.tail),
            KeyKind::Subgraph { triples } => triples
                .iter()
                .map(|k| t(&k.head, &k.relation, &k.tail))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }

    /// Every text a triple is compared with: local keys, each subgraph's
    /// members, and each whole subgraph.
    pub fn scoring_texts(keys: &KeySet) -> Vec<String> {
        let mut out: Vec<String> = keys.local.iter().map(key_text).collect();
        for g in &keys.global {
            if let KeyKind::Subgraph { triples } = &g.kind {
                for k in triples {
                    out.push(format!("{} {} {}", k.head, k.relation, k.tail));
                }
            }
            out.push(key_text(g));
        }
        out
    }

    /// All-pairs brute force: triples whose similarity to some key exceeds
    /// `num/den`.
    pub fn filter(triples: &[Triple], keys: &KeySet, num: i64, den: i64) -> Vec<Triple> {
        let texts = scoring_texts(keys);
        let mut out: Vec<Triple> = triples
            .iter()
            .filter(|t| {
                let s = format!("{} {} {}", t.head.surface(), t.relation, t.tail.surface());
                texts.iter().any(|k| exceeds(&s, k, num, den))
            })
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Full-table LCS.
    pub fn lcs(a: &[&str], b: &[&str]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] {
                    t[i - 1][j - 1] + 1
                } else {
                    t[i - 1][j].max(t[i][j - 1])
                };
            }
        }
        t[a.len()][b.len()]
    }

    pub fn rouge(a: &[&str], b: &[&str]) -> f64 {
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        let l = lcs(a, b) as f64;
        if l == 0.0 {
            return 0.0;
        }
        let (p, r) = (l / a.len() as f64, l / b.len() as f64);
        2.0 * p * r / (p + r)
    }
}
