//! Retrieval keys extracted from the mind map.
//!
//! Local keys are entities, entity–relation pairs and triples written in
//! angle brackets (`<entity>`, `<entity-relation>`, `<entity-relation-entity>`).
//! Global keys are subgraphs: groups of `(subject, relation, object)` triples
//! connected through shared mentions.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Stage, Warnings};
use crate::kg_store::{normalize, tidy};
use crate::llm::{prompts::render_prompt, Bindings, GenerationRequest, LlmBackend, LlmError, PromptName, Slot};
use crate::mindmap::{MindMap, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl TripleKey {
    pub fn new(head: &str, relation: &str, tail: &str) -> Option<Self> {
        let (head, relation, tail) = (tidy(head), tidy(relation), tidy(tail));
        if head.is_empty() || relation.is_empty() || tail.is_empty() {
            return None;
        }
        Some(Self { head, relation, tail })
    }

    fn normalized(&self) -> Self {
        Self {
            head: normalize(&self.head),
            relation: normalize(&self.relation),
            tail: normalize(&self.tail),
        }
    }

    pub fn serialize(&self) -> String {
        format!("{} {} {}", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeyKind {
    Entity { mention: String },
    Pair { mention: String, relation: String },
    Triple(TripleKey),
    Subgraph { triples: Vec<TripleKey> },
}

impl KeyKind {
    fn normalized(&self) -> KeyKind {
        match self {
            KeyKind::Entity { mention } => KeyKind::Entity {
                mention: normalize(mention),
            },
            KeyKind::Pair { mention, relation } => KeyKind::Pair {
                mention: normalize(mention),
                relation: normalize(relation),
            },
            KeyKind::Triple(t) => KeyKind::Triple(t.normalized()),
            KeyKind::Subgraph { triples } => KeyKind::Subgraph {
                triples: triples.iter().map(TripleKey::normalized).collect(),
            },
        }
    }

    /// Entity mentions carried by the key: the mention of entities and pairs,
    /// head and tail of triples, and every head and tail inside a subgraph.
    pub fn mentions(&self) -> Vec<&str> {
        match self {
            KeyKind::Entity { mention } | KeyKind::Pair { mention, .. } => vec![mention.as_str()],
            KeyKind::Triple(t) => vec![t.head.as_str(), t.tail.as_str()],
            KeyKind::Subgraph { triples } => triples
                .iter()
                .flat_map(|t| [t.head.as_str(), t.tail.as_str()])
                .collect(),
        }
    }

    pub fn is_local(&self) -> bool {
        !matches!(self, KeyKind::Subgraph { .. })
    }
}

/// An extracted key plus the mind-map nodes whose questions mention it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Key {
    #[serde(flatten)]
    pub kind: KeyKind,
    pub origin: Vec<NodeId>,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.kind.normalized() == other.kind.normalized()
    }
}
impl Eq for Key {}

impl Key {
    pub fn entity(mention: &str) -> Self {
        Self {
            kind: KeyKind::Entity { mention: tidy(mention) },
            origin: Vec::new(),
        }
    }

    pub fn pair(mention: &str, relation: &str) -> Self {
        Self {
            kind: KeyKind::Pair {
                mention: tidy(mention),
                relation: tidy(relation),
            },
            origin: Vec::new(),
        }
    }

    pub fn triple(head: &str, relation: &str, tail: &str) -> Self {
        Self {
            kind: KeyKind::Triple(TripleKey {
                head: tidy(head),
                relation: tidy(relation),
                tail: tidy(tail),
            }),
            origin: Vec::new(),
        }
    }

    pub fn subgraph(triples: Vec<TripleKey>) -> Self {
        Self {
            kind: KeyKind::Subgraph { triples },
            origin: Vec::new(),
        }
    }

    /// Dedup identity: the kind with all text normalized.
    pub fn identity(&self) -> KeyKind {
        self.kind.normalized()
    }

    /// Check the per-variant shape rules.
    pub fn is_valid(&self) -> bool {
        match &self.kind {
            KeyKind::Entity { mention } => !mention.is_empty(),
            KeyKind::Pair { mention, relation } => !mention.is_empty() && !relation.is_empty(),
            KeyKind::Triple(t) => !t.head.is_empty() && !t.relation.is_empty() && !t.tail.is_empty(),
            KeyKind::Subgraph { triples } => {
                triples.len() >= 2
                    && triples
                        .iter()
                        .all(|t| !t.head.is_empty() && !t.relation.is_empty() && !t.tail.is_empty())
                    && components(triples).len() == 1
            }
        }
    }

    fn attribute(mut self, map: &MindMap) -> Self {
        let mentions: Vec<String> = self.kind.mentions().into_iter().map(normalize).collect();
        self.origin = map
            .preorder()
            .into_iter()
            .filter(|n| {
                let q = normalize(&n.question);
                mentions.iter().any(|m| q.contains(m.as_str()))
            })
            .map(|n| n.id.clone())
            .collect();
        if self.origin.is_empty() {
            self.origin.push(map.root_id().clone());
        }
        self
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_key(self))
    }
}

/// Text embedded when scoring a key: entity → mention, pair → "mention
/// relation", triple → "head relation tail", subgraph → constituents joined
/// by `"; "`.
pub fn serialize_key(key: &Key) -> String {
    match &key.kind {
        KeyKind::Entity { mention } => mention.clone(),
        KeyKind::Pair { mention, relation } => format!("{mention} {relation}"),
        KeyKind::Triple(t) => t.serialize(),
        KeyKind::Subgraph { triples } => triples.iter().map(TripleKey::serialize).collect::<Vec<_>>().join("; "),
    }
}

fn dedup(keys: Vec<Key>) -> Vec<Key> {
    let mut seen = HashSet::new();
    keys.into_iter().filter(|k| seen.insert(k.identity())).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySet {
    pub local: Vec<Key>,
    pub global: Vec<Key>,
}

impl KeySet {
    /// Deduplicates within and across both lists; global keys must be
    /// subgraphs and local keys must not be.
    pub fn new(local: Vec<Key>, global: Vec<Key>) -> Self {
        let local = dedup(local.into_iter().filter(|k| k.kind.is_local()).collect());
        let global = dedup(global.into_iter().filter(|k| !k.kind.is_local()).collect());
        Self { local, global }
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty() && self.global.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Key> {
        self.local.iter().chain(self.global.iter())
    }

    /// Keys a triple is scored against: every local key, each subgraph's
    /// constituent triples, and each whole subgraph. Deduplicated, in that
    /// order.
    pub fn scoring_keys(&self) -> Vec<Key> {
        let mut keys: Vec<Key> = self.local.clone();
        for g in &self.global {
            if let KeyKind::Subgraph { triples } = &g.kind {
                keys.extend(triples.iter().map(|t| Key {
                    kind: KeyKind::Triple(t.clone()),
                    origin: g.origin.clone(),
                }));
            }
            keys.push(g.clone());
        }
        dedup(keys)
    }

    /// Distinct entity mentions across all keys, normalized and sorted.
    pub fn mentions(&self) -> Vec<String> {
        self.iter()
            .flat_map(|k| k.kind.mentions())
            .map(normalize)
            .filter(|m| !m.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            temperature: 0.4,
            max_tokens: crate::llm::DEFAULT_MAX_TOKENS,
        }
    }
}

fn split_angle_key(body: &str) -> Option<Key> {
    let body = body.trim().trim_matches(|c| c == '"' || c == '\'');
    // spaced hyphens separate fields unambiguously; otherwise plain hyphens
    let parts: Vec<&str> = if body.contains(" - ") {
        body.split(" - ").collect()
    } else {
        body.split('-').collect()
    };
    let parts: Vec<String> = parts.iter().map(|p| tidy(p)).collect();
    if parts.iter().any(String::is_empty) {
        return None;
    }
    match parts.as_slice() {
        [e] => Some(Key::entity(e)),
        [e, r] => Some(Key::pair(e, r)),
        [h, r, t] => Some(Key::triple(h, r, t)),
        _ => None,
    }
}

/// Parse `<...>` spans from a local-extraction reply.
pub fn parse_local_keys(reply: &str, warnings: &mut Warnings) -> Vec<Key> {
    let re = Regex::new(r"<([^<>\n]+)>").expect("static pattern");
    let mut keys = Vec::new();
    for cap in re.captures_iter(reply) {
        match split_angle_key(&cap[1]) {
            Some(k) => keys.push(k),
            None => warnings.push(
                Stage::Extraction,
                format!("ignoring unreadable local key <{}>", &cap[1]),
            ),
        }
    }
    dedup(keys)
}

/// Parse `(subject, relation, object)` tuples from a global-extraction reply.
pub fn parse_triple_list(reply: &str) -> Vec<TripleKey> {
    let text = reply.replace(['\u{201c}', '\u{201d}'], "\"");
    let field = r#"\s*("[^"]*"|[^,()"]+?)\s*"#;
    let re = Regex::new(&format!(r"\({field},{field},{field}\)")).expect("static pattern");
    let strip = |s: &str| s.trim().trim_matches('"').to_string();
    let mut seen = HashSet::new();
    re.captures_iter(&text)
        .filter_map(|c| TripleKey::new(&strip(&c[1]), &strip(&c[2]), &strip(&c[3])))
        .filter(|t| seen.insert(t.normalized()))
        .collect()
}

/// Group triples into connected components over shared normalized head/tail
/// mentions. Components keep first-appearance order, members keep input order.
fn components(triples: &[TripleKey]) -> Vec<Vec<usize>> {
    let n = triples.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mentions: Vec<[String; 2]> = triples
        .iter()
        .map(|t| [normalize(&t.head), normalize(&t.tail)])
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if mentions[i].iter().any(|m| mentions[j].contains(m)) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, g)) => g.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Subgraph keys from connected groups of two or more triples; lone triples
/// are returned separately as local triple keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalKeys {
    pub subgraphs: Vec<Key>,
    pub demoted: Vec<Key>,
}

pub fn group_subgraphs(triples: Vec<TripleKey>) -> GlobalKeys {
    let mut out = GlobalKeys::default();
    for group in components(&triples) {
        if group.len() == 1 {
            out.demoted.push(Key {
                kind: KeyKind::Triple(triples[group[0]].clone()),
                origin: Vec::new(),
            });
        } else {
            out.subgraphs
                .push(Key::subgraph(group.iter().map(|&i| triples[i].clone()).collect()));
        }
    }
    out
}

fn request(template: PromptName, map: &MindMap, cfg: &ExtractionConfig) -> Result<GenerationRequest, LlmError> {
    let prompt = render_prompt(template, &Bindings::new().bind(Slot::MindMap, map.questions_json()))?;
    Ok(GenerationRequest::new(
        template,
        prompt,
        cfg.temperature,
        cfg.max_tokens,
    ))
}

/// One local-extraction call over the whole map.
pub fn extract_local_keys(
    map: &MindMap,
    backend: &dyn LlmBackend,
    cfg: &ExtractionConfig,
    warnings: &mut Warnings,
) -> Result<Vec<Key>, LlmError> {
    let reply = backend.generate(&request(PromptName::ExtLocal, map, cfg)?)?;
    let keys = parse_local_keys(&reply, warnings);
    if keys.is_empty() {
        warnings.push(Stage::Extraction, "local extraction produced no keys");
    }
    Ok(keys.into_iter().map(|k| k.attribute(map)).collect())
}

/// One global-extraction call over the whole map.
pub fn extract_global_keys(
    map: &MindMap,
    backend: &dyn LlmBackend,
    cfg: &ExtractionConfig,
    warnings: &mut Warnings,
) -> Result<GlobalKeys, LlmError> {
    let reply = backend.generate(&request(PromptName::ExtGlobal, map, cfg)?)?;
    let triples = parse_triple_list(&reply);
    if triples.is_empty() {
        warnings.push(Stage::Extraction, "global extraction produced no triples");
    }
    let grouped = group_subgraphs(triples);
    Ok(GlobalKeys {
        subgraphs: grouped.subgraphs.into_iter().map(|k| k.attribute(map)).collect(),
        demoted: grouped.demoted.into_iter().map(|k| k.attribute(map)).collect(),
    })
}
