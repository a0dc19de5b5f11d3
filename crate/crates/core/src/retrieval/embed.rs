//! Text embedders: the deterministic hashed bag-of-tokens default, an HTTP
//! client for external embedding endpoints, and a per-run cache.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::http::{HttpConfig, JsonPoster};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("embedding endpoint: {0}")]
    Endpoint(String),
}

/// Dense vector produced by an [`Embedder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbedError> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Deterministic text-to-vector port.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Split text into lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// 64-bit FNV-1a. Fixed constants keep bucket assignment stable across
/// platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag-of-tokens embedder: each token is hashed to a bucket, bucket counts are
/// L2-normalized. Text without tokens maps to the zero vector.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl HashedEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|c| *c /= norm);
        }
        Ok(EmbeddingVector(v))
    }
}

/// Memoizes another embedder by exact input text. Safe to share across
/// threads; concurrent misses on the same text may both compute, which is
/// harmless for a deterministic inner embedder.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn Embedder,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn Embedder) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Embedder for CachedEmbedder<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if let Some(v) = self.cache.lock().expect("embedding cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

/// Client for an OpenAI-style `/embeddings` endpoint: a list of texts goes
/// out, a list of equal-length vectors comes back.
pub struct HttpEmbedder {
    poster: JsonPoster,
    model: String,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig, model: impl Into<String>, dimension: usize) -> Result<Self, EmbedError> {
        let poster = JsonPoster::new(config).map_err(|e| EmbedError::Endpoint(e.to_string()))?;
        Ok(Self {
            poster,
            model: model.into(),
            dimension,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| EmbedError::Endpoint("empty embedding response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = EmbedRequest {
            model: &self.model,
            input: texts,
        };
        let response: EmbedResponse = self
            .poster
            .post("embeddings", &body)
            .map_err(|e| EmbedError::Endpoint(e.to_string()))?;
        if response.data.len() != texts.len() {
            return Err(EmbedError::Endpoint(format!(
                "expected {} vectors, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        response
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        left: self.dimension,
                        right: d.embedding.len(),
                    });
                }
                EmbeddingVector::new(d.embedding)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_embedding_is_unit_or_zero() {
        let e = HashedEmbedder::default();
        let v = e.embed("David Beckham recruited by").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(e.embed("  ,, ").unwrap().norm(), 0.0);
        assert!(v.components().iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn hashed_embedding_is_case_and_punctuation_blind() {
        let e = HashedEmbedder::default();
        assert_eq!(
            e.embed("recruited_by Alex").unwrap(),
            e.embed("RECRUITED by, alex").unwrap()
        );
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn cache_memoizes() {
        let inner = HashedEmbedder::default();
        let cached = CachedEmbedder::new(&inner);
        let a = cached.embed("paris").unwrap();
        let b = cached.embed("paris").unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.len(), 1);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(EmbedError::NonFinite)
        ));
    }
}
