//! Answer metrics over normalized token sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::reasoning::detect_abstention;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

fn is_stripped(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}')
}

/// Lowercase, drop punctuation, split on whitespace, remove articles.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text.to_lowercase().chars().filter(|&c| !is_stripped(c)).collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

/// 1 iff the normalized prediction equals some normalized gold.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize_answer(pred);
    if golds.iter().any(|g| normalize_answer(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    }
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn harmonic(overlap: usize, pred_len: usize, gold_len: usize) -> f64 {
    if pred_len == 0 && gold_len == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred_len as f64;
    let r = overlap as f64 / gold_len as f64;
    2.0 * p * r / (p + r)
}

/// Rouge-L over already-normalized token sequences.
pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], gold: &[T]) -> f64 {
    harmonic(lcs_len(pred, gold), pred.len(), gold.len())
}

fn rouge_tokens(p: &[String], g: &[String]) -> f64 {
    rouge_l_tokens(p, g)
}

fn f1_tokens(p: &[String], g: &[String]) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0;
    for t in p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    harmonic(overlap, p.len(), g.len())
}

/// Balanced LCS F-measure against a single gold. Two answers that both
/// normalize to nothing score 1.
pub fn rouge_l(pred: &str, gold: &str) -> f64 {
    rouge_tokens(&normalize_answer(pred), &normalize_answer(gold))
}

/// Rouge-L against the best-matching gold.
pub fn rouge_l_max<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize_answer(pred);
    golds
        .iter()
        .map(|g| rouge_tokens(&p, &normalize_answer(g.as_ref())))
        .fold(0.0, f64::max)
}

/// Token-multiset F1 against the best-matching gold.
pub fn f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize_answer(pred);
    golds
        .iter()
        .map(|g| f1_tokens(&p, &normalize_answer(g.as_ref())))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Correct,
    Missing,
    Hallucination,
}

/// Abstentions are `Missing`; otherwise exact matches are `Correct` and
/// everything else is `Hallucination`.
pub fn categorize<S: AsRef<str>>(pred: &str, golds: &[S]) -> Category {
    if detect_abstention(pred) {
        Category::Missing
    } else if exact_match(pred, golds) == 1.0 {
        Category::Correct
    } else {
        Category::Hallucination
    }
}
