//! Indexed triple store: loading, entity resolution and neighborhood expansion.
//!
//! The graph is immutable once loaded. Triples are kept sorted by
//! `(head, relation, tail)` canonical text, so a triple's index doubles as its
//! lexicographic rank and every iteration order is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::retrieval::{cosine_sim, EmbedError, Embedder};

/// Lowercase, trim and collapse internal whitespace runs into single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Trim and collapse whitespace while keeping the original casing.
pub(crate) fn tidy(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty entity text")]
    EmptyEntity,
    #[error("empty relation text")]
    EmptyRelation,
    #[error("hops must be at least 1")]
    ZeroHops,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An entity identified by its normalized text. Equality, ordering and hashing
/// consider only the canonical form; the surface form is kept for display.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId {
    canonical: String,
    surface: String,
}

impl EntityId {
    pub fn new(surface: &str) -> Result<Self, KgError> {
        let canonical = normalize(surface);
        if canonical.is_empty() {
            return Err(KgError::EmptyEntity);
        }
        Ok(Self {
            canonical,
            surface: tidy(surface),
        })
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }
}

impl TryFrom<String> for EntityId {
    type Error = KgError;
    fn try_from(s: String) -> Result<Self, KgError> {
        EntityId::new(&s)
    }
}

impl From<EntityId> for String {
    fn from(e: EntityId) -> String {
        e.surface
    }
}

impl PartialEq for EntityId {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}
impl Eq for EntityId {}

impl Hash for EntityId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical.hash(state);
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical.cmp(&other.canonical)
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.canonical)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

/// A `(head, relation, tail)` record. Ordering is lexicographic over the
/// canonical head, normalized relation and canonical tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self, KgError> {
        let relation = normalize(relation);
        if relation.is_empty() {
            return Err(KgError::EmptyRelation);
        }
        Ok(Self {
            head: EntityId::new(head)?,
            relation,
            tail: EntityId::new(tail)?,
        })
    }

    /// Text fed to the embedder when scoring this triple against keys.
    pub fn serialize(&self) -> String {
        format!("{} {} {}", self.head.surface, self.relation, self.tail.surface)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head.surface, self.relation, self.tail.surface)
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    entities: BTreeMap<String, EntityId>,
    adjacency: HashMap<String, Vec<usize>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}
impl Eq for KnowledgeGraph {}

impl KnowledgeGraph {
    /// Build a graph from triples; duplicates collapse to one entry.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let set: BTreeSet<Triple> = triples.into_iter().collect();
        let triples: Vec<Triple> = set.into_iter().collect();
        let mut entities = BTreeMap::new();
        let mut adjacency: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, t) in triples.iter().enumerate() {
            for e in [&t.head, &t.tail] {
                entities.entry(e.canonical.clone()).or_insert_with(|| e.clone());
                let list = adjacency.entry(e.canonical.clone()).or_default();
                // self-loops would otherwise be listed twice
                if list.last() != Some(&idx) {
                    list.push(idx);
                }
            }
        }
        Self {
            triples,
            entities,
            adjacency,
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Entities in lexicographic order of their canonical text.
    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.values()
    }

    pub fn entity(&self, canonical: &str) -> Option<&EntityId> {
        self.entities.get(canonical)
    }

    /// Triples incident to `e` in either position, lexicographically ordered.
    pub fn incident(&self, e: &EntityId) -> Vec<&Triple> {
        self.adjacency
            .get(&e.canonical)
            .map(|ids| ids.iter().map(|&i| &self.triples[i]).collect())
            .unwrap_or_default()
    }

    /// Write the graph in the tab-separated line format accepted by
    /// [`load_graph`].
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in &self.triples {
            writeln!(out, "{}\t{}\t{}", t.head.surface, t.relation, t.tail.surface)?;
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical serialization; stable across loads of
    /// equal graphs.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.triples {
            hasher.update(t.head.canonical.as_bytes());
            hasher.update(b"\t");
            hasher.update(t.relation.as_bytes());
            hasher.update(b"\t");
            hasher.update(t.tail.canonical.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Breadth-first expansion from `start` within `hops` edge traversals,
    /// without any hub cap.
    pub fn neighbors(&self, start: &EntityId, hops: usize) -> Result<Vec<&Triple>, KgError> {
        self.expand(start, hops, usize::MAX, |_, incident, _| Ok::<_, KgError>(incident))
    }

    /// Breadth-first expansion with a per-entity hub cap.
    ///
    /// Whenever an entity has more than `hub_cap` incident triples, `select`
    /// is handed the full incident list (lexicographic order) and must return
    /// the subset to follow. The result is sorted lexicographically.
    pub fn expand<'g, E, F>(
        &'g self,
        start: &EntityId,
        hops: usize,
        hub_cap: usize,
        mut select: F,
    ) -> Result<Vec<&'g Triple>, E>
    where
        E: From<KgError>,
        F: FnMut(&EntityId, Vec<&'g Triple>, usize) -> Result<Vec<&'g Triple>, E>,
    {
        if hops == 0 {
            return Err(KgError::ZeroHops.into());
        }
        let Some(start) = self.entities.get(&start.canonical) else {
            return Ok(Vec::new());
        };
        let mut seen_entities: BTreeSet<&str> = BTreeSet::new();
        let mut found: BTreeSet<*const Triple> = BTreeSet::new();
        let mut collected: Vec<&'g Triple> = Vec::new();
        let mut frontier = vec![start];
        seen_entities.insert(start.canonical.as_str());

        for _ in 0..hops {
            let mut next = Vec::new();
            for entity in frontier {
                let mut incident = self.incident(entity);
                if incident.len() > hub_cap {
                    incident = select(entity, incident, hub_cap)?;
                    incident.truncate(hub_cap);
                }
                for t in incident {
                    if found.insert(t as *const Triple) {
                        collected.push(t);
                    }
                    for other in [&t.head, &t.tail] {
                        if seen_entities.insert(other.canonical.as_str()) {
                            next.push(self.entities.get(&other.canonical).expect("indexed"));
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        collected.sort();
        Ok(collected)
    }

    /// Bind a free-text mention to a graph entity.
    ///
    /// An exact canonical match wins outright. Otherwise the entity with the
    /// highest embedding cosine similarity is returned if that similarity
    /// strictly exceeds `threshold`; ties go to the lexicographically smallest
    /// canonical.
    pub fn resolve_entity(
        &self,
        mention: &str,
        embedder: &dyn Embedder,
        threshold: f64,
    ) -> Result<Option<&EntityId>, EmbedError> {
        let canonical = normalize(mention);
        if canonical.is_empty() {
            return Ok(None);
        }
        if let Some(e) = self.entities.get(&canonical) {
            return Ok(Some(e));
        }
        let probe = embedder.embed(&canonical)?;
        let mut best: Option<(&EntityId, f64)> = None;
        for (key, entity) in &self.entities {
            let score = cosine_sim(&probe, &embedder.embed(key)?)?;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((entity, score));
            }
        }
        Ok(best.filter(|&(_, s)| s > threshold).map(|(e, _)| e))
    }
}

/// Parse the tab-separated triple format. Blank lines and lines starting with
/// `#` are skipped; a line with anything other than three non-empty fields is
/// an error carrying its 1-based line number.
pub fn load_graph<R: BufRead>(source: R) -> Result<KnowledgeGraph, KgError> {
    let mut triples = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgError::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let triple = Triple::new(fields[0], fields[1], fields[2]).map_err(|e| KgError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        triples.push(triple);
    }
    Ok(KnowledgeGraph::from_triples(triples))
}

pub fn load_graph_file(path: &std::path::Path) -> Result<KnowledgeGraph, KgError> {
    let file = std::fs::File::open(path)?;
    load_graph(io::BufReader::new(file))
}
