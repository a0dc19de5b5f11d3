//! Evidence retrieval: expand resolved key entities into a candidate triple
//! set, then keep the candidates whose best cosine similarity to any key
//! strictly exceeds the threshold.

mod embed;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use embed::{fnv1a, tokenize, CachedEmbedder, EmbedError, Embedder, EmbeddingVector, HashedEmbedder, HttpEmbedder};

use crate::extraction::{serialize_key, Key, KeySet};
use crate::kg_store::{KgError, KnowledgeGraph, Triple};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] KgError),
}

/// Cosine similarity, clamped to [-1, 1]. A zero vector scores 0.
pub fn cosine_sim(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbedError> {
    if u.dimension() != v.dimension() {
        return Err(EmbedError::DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.components().iter().zip(v.components()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub epsilon: f64,
    pub hops: usize,
    /// Maximum incident triples followed per entity during expansion.
    pub hub_cap: usize,
    /// Similarity a mention must exceed to bind to a non-identical entity.
    pub resolve_threshold: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.7,
            hops: 1,
            hub_cap: 512,
            resolve_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub triple: Triple,
    pub best_key: Key,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedTripleSet {
    pub kept: Vec<ScoredTriple>,
    pub candidate_count: usize,
    pub epsilon: f64,
}

impl RetrievedTripleSet {
    pub fn empty(epsilon: f64) -> Self {
        Self {
            kept: Vec::new(),
            candidate_count: 0,
            epsilon,
        }
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.kept.iter().map(|s| &s.triple)
    }
}

/// Embeddings of the scoring keys, computed once per call.
struct KeyVectors {
    keys: Vec<Key>,
    vectors: Vec<EmbeddingVector>,
}

impl KeyVectors {
    fn new(keys: &KeySet, embedder: &dyn Embedder) -> Result<Self, EmbedError> {
        let keys = keys.scoring_keys();
        let vectors = keys
            .iter()
            .map(|k| embedder.embed(&serialize_key(k)))
            .collect::<Result<_, _>>()?;
        Ok(Self { keys, vectors })
    }

    /// Best `(key index, score)` for a triple; the first key reaching the
    /// maximum wins.
    fn best(&self, triple: &Triple, embedder: &dyn Embedder) -> Result<Option<(usize, f64)>, EmbedError> {
        let tv = embedder.embed(&triple.serialize())?;
        let mut best: Option<(usize, f64)> = None;
        for (i, kv) in self.vectors.iter().enumerate() {
            let s = cosine_sim(&tv, kv)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        Ok(best)
    }
}

/// Candidate set: union of neighborhoods of every resolvable key mention.
///
/// When an entity exceeds the hub cap, its incident triples are ranked by
/// best key similarity (ties broken lexicographically) and only the top
/// `hub_cap` are followed.
pub fn gather_candidates(
    graph: &KnowledgeGraph,
    keys: &KeySet,
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<Vec<Triple>, RetrievalError> {
    let mut key_vectors: Option<KeyVectors> = None;
    let mut found: std::collections::BTreeSet<&Triple> = std::collections::BTreeSet::new();
    for mention in keys.mentions() {
        let Some(entity) = graph.resolve_entity(&mention, embedder, cfg.resolve_threshold)? else {
            continue;
        };
        let expanded = graph.expand(entity, cfg.hops, cfg.hub_cap, |_, incident, cap| {
            if key_vectors.is_none() {
                key_vectors = Some(KeyVectors::new(keys, embedder)?);
            }
            let kv = key_vectors.as_ref().expect("just set");
            let mut scored = incident
                .into_iter()
                .map(|t| Ok((t, kv.best(t, embedder)?.map_or(f64::NEG_INFINITY, |(_, s)| s))))
                .collect::<Result<Vec<_>, EmbedError>>()?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            Ok::<_, RetrievalError>(scored.into_iter().take(cap).map(|(t, _)| t).collect())
        })?;
        found.extend(expanded);
    }
    Ok(found.into_iter().cloned().collect())
}

fn order(a: &ScoredTriple, b: &ScoredTriple) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.triple.cmp(&b.triple))
}

/// Scores this close to the threshold count as equal to it. Rounding in the
/// normalized dot product can push an exact tie a few ulps either way.
pub const SCORE_TOLERANCE: f64 = 1e-9;

/// Keep candidates with best key similarity strictly above `epsilon`.
/// Output is sorted by score descending, then triple order.
pub fn filter_by_similarity(
    candidates: &[Triple],
    keys: &KeySet,
    embedder: &dyn Embedder,
    epsilon: f64,
) -> Result<RetrievedTripleSet, RetrievalError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(RetrievalError::InvalidEpsilon(epsilon));
    }
    let mut distinct: Vec<&Triple> = candidates.iter().collect();
    distinct.sort();
    distinct.dedup();
    let kv = KeyVectors::new(keys, embedder)?;
    let mut kept = Vec::new();
    for t in &distinct {
        if let Some((i, score)) = kv.best(t, embedder)? {
            if score > epsilon + SCORE_TOLERANCE {
                kept.push(ScoredTriple {
                    triple: (*t).clone(),
                    best_key: kv.keys[i].clone(),
                    score,
                });
            }
        }
    }
    kept.sort_by(order);
    Ok(RetrievedTripleSet {
        kept,
        candidate_count: distinct.len(),
        epsilon,
    })
}

/// Gather then filter, sharing one embedding cache.
pub fn retrieve(
    graph: &KnowledgeGraph,
    keys: &KeySet,
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<RetrievedTripleSet, RetrievalError> {
    let cached = CachedEmbedder::new(embedder);
    let candidates = gather_candidates(graph, keys, &cached, cfg)?;
    filter_by_similarity(&candidates, keys, &cached, cfg.epsilon)
}
