//! Top-down question decomposition into a tree of sub-questions.
//!
//! Node ids are dotted paths: the root is `"0"`, its children `"0.0"`,
//! `"0.1"`, and so on. Ids are therefore deterministic and reveal position.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Stage, Warnings};
use crate::kg_store::normalize;
use crate::llm::{
    prompts::render_prompt, Bindings, GenerationRequest, LlmBackend, LlmError, PromptName, Slot, DEFAULT_MAX_TOKENS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeState {
    Continue,
    End,
}

impl NodeState {
    /// Case-insensitive, tolerant of surrounding quotes and trailing
    /// punctuation (`"End."` parses as `End`).
    pub fn parse(text: &str) -> Option<Self> {
        let t = text
            .trim()
            .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
            .to_ascii_lowercase();
        match t.as_str() {
            "continue" => Some(NodeState::Continue),
            "end" => Some(NodeState::End),
            _ => None,
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeState::Continue => "Continue",
            NodeState::End => "End",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn root() -> Self {
        NodeId("0".into())
    }

    pub fn child(&self, index: usize) -> Self {
        NodeId(format!("{}.{index}", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MindMapNode {
    pub id: NodeId,
    pub question: String,
    pub depth: usize,
    pub state: NodeState,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MindMapError {
    #[error("mind map has no root node {0}")]
    MissingRoot(NodeId),
    #[error("node {0} referenced but not present")]
    Dangling(NodeId),
    #[error("node {node}: {message}")]
    Invalid { node: NodeId, message: String },
    #[error("mind map is not a single tree: {reached} of {total} nodes reachable from the root")]
    Disconnected { reached: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MindMap {
    nodes: BTreeMap<NodeId, MindMapNode>,
    root: NodeId,
}

/// Nested form used in trace files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedNode {
    pub id: NodeId,
    pub question: String,
    pub depth: usize,
    pub state: NodeState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NestedNode>,
}

impl MindMap {
    /// A map with only the root, marked `End`.
    pub fn single(question: &str) -> Self {
        let root = NodeId::root();
        let node = MindMapNode {
            id: root.clone(),
            question: question.to_string(),
            depth: 0,
            state: NodeState::End,
            parent: None,
            children: Vec::new(),
        };
        Self {
            nodes: BTreeMap::from([(root.clone(), node)]),
            root,
        }
    }

    pub fn root(&self) -> &MindMapNode {
        &self.nodes[&self.root]
    }

    pub fn root_id(&self) -> &NodeId {
        &self.root
    }

    pub fn node(&self, id: &NodeId) -> Option<&MindMapNode> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in pre-order (parent before children, siblings in order).
    pub fn preorder(&self) -> Vec<&MindMapNode> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![&self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn leaves(&self) -> impl Iterator<Item = &MindMapNode> {
        self.nodes.values().filter(|n| n.children.is_empty())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.values().map(|n| n.depth).max().unwrap_or(0)
    }

    /// JSON array of every question in pre-order, the form handed to the
    /// extraction prompts.
    pub fn questions_json(&self) -> String {
        let qs: Vec<&str> = self.preorder().iter().map(|n| n.question.as_str()).collect();
        serde_json::to_string(&qs).expect("string list serializes")
    }

    pub fn to_nested(&self) -> NestedNode {
        fn build(map: &MindMap, id: &NodeId) -> NestedNode {
            let n = &map.nodes[id];
            NestedNode {
                id: n.id.clone(),
                question: n.question.clone(),
                depth: n.depth,
                state: n.state,
                children: n.children.iter().map(|c| build(map, c)).collect(),
            }
        }
        build(self, &self.root)
    }

    pub fn from_nested(root: &NestedNode) -> Result<Self, MindMapError> {
        let mut nodes = BTreeMap::new();
        let mut stack = vec![(root, None::<NodeId>)];
        while let Some((n, parent)) = stack.pop() {
            nodes.insert(
                n.id.clone(),
                MindMapNode {
                    id: n.id.clone(),
                    question: n.question.clone(),
                    depth: n.depth,
                    state: n.state,
                    parent,
                    children: n.children.iter().map(|c| c.id.clone()).collect(),
                },
            );
            for c in &n.children {
                stack.push((c, Some(n.id.clone())));
            }
        }
        let map = Self {
            nodes,
            root: root.id.clone(),
        };
        map.validate()?;
        Ok(map)
    }

    /// Check the tree invariants: one root at depth 0, consistent parent and
    /// child links, depth increasing by one per level, `End` exactly on leaves,
    /// every node reachable.
    pub fn validate(&self) -> Result<(), MindMapError> {
        let root = self
            .nodes
            .get(&self.root)
            .ok_or_else(|| MindMapError::MissingRoot(self.root.clone()))?;
        let invalid = |node: &NodeId, message: &str| MindMapError::Invalid {
            node: node.clone(),
            message: message.to_string(),
        };
        if root.depth != 0 || root.parent.is_some() {
            return Err(invalid(&root.id, "root must have depth 0 and no parent"));
        }
        let mut reached = 0usize;
        let mut stack = vec![&self.root];
        let mut visited = std::collections::BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                return Err(invalid(id, "node reached twice"));
            }
            reached += 1;
            let node = self.nodes.get(id).ok_or_else(|| MindMapError::Dangling(id.clone()))?;
            if (node.state == NodeState::End) != node.children.is_empty() {
                return Err(invalid(id, "state must be End exactly when the node is a leaf"));
            }
            for c in &node.children {
                let child = self.nodes.get(c).ok_or_else(|| MindMapError::Dangling(c.clone()))?;
                if child.parent.as_ref() != Some(id) {
                    return Err(invalid(c, "parent link disagrees with child list"));
                }
                if child.depth != node.depth + 1 {
                    return Err(invalid(c, "depth must be parent depth + 1"));
                }
                stack.push(c);
            }
        }
        if reached != self.nodes.len() {
            return Err(MindMapError::Disconnected {
                reached,
                total: self.nodes.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub max_depth: usize,
    pub max_parse_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            max_parse_retries: 1,
            temperature: 0.4,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// One parsed `{Sub-question, State}` record.
pub type SubQuestion = (String, NodeState);

fn straighten_quotes(text: &str) -> String {
    text.replace(['\u{201c}', '\u{201d}'], "\"")
}

fn record_from_value(value: &serde_json::Value, warnings: &mut Warnings) -> Option<SubQuestion> {
    match value {
        serde_json::Value::String(s) => Some((s.trim().to_string(), NodeState::End)),
        serde_json::Value::Object(map) => {
            let field = |want: &str| {
                map.iter()
                    .find(|(k, _)| k.to_ascii_lowercase().replace(['-', '_', ' '], "") == want)
                    .and_then(|(_, v)| v.as_str())
            };
            let question = field("subquestion").or_else(|| field("question"))?.trim().to_string();
            let state = match field("state").map(NodeState::parse) {
                Some(Some(s)) => s,
                other => {
                    warnings.push(
                        Stage::Decomposition,
                        format!("sub-question {question:?} has no readable state ({other:?}); treating as End"),
                    );
                    NodeState::End
                }
            };
            Some((question, state))
        }
        _ => None,
    }
}

/// Parse a decomposition reply. `None` means nothing usable was found;
/// `Some(vec![])` means the model explicitly returned an empty list.
pub fn parse_decomposition(reply: &str, warnings: &mut Warnings) -> Option<Vec<SubQuestion>> {
    let text = straighten_quotes(reply);
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    if end < start {
        return None;
    }
    let span = &text[start..=end];
    if let Ok(values) = serde_json::from_str::<Vec<serde_json::Value>>(span) {
        let parsed: Vec<SubQuestion> = values
            .iter()
            .filter_map(|v| record_from_value(v, warnings))
            .filter(|(q, _)| !q.is_empty())
            .collect();
        if parsed.is_empty() && !values.is_empty() {
            return None;
        }
        return Some(parsed);
    }
    // tolerate almost-JSON: trailing commas, unescaped text around records
    let re = Regex::new(r#"(?s)"Sub-question"\s*:\s*"((?:[^"\\]|\\.)*)"\s*,\s*"State"\s*:\s*"((?:[^"\\]|\\.)*)""#)
        .expect("static pattern");
    let parsed: Vec<SubQuestion> = re
        .captures_iter(span)
        .filter_map(|c| {
            let q = c[1].trim().to_string();
            if q.is_empty() {
                return None;
            }
            let state = NodeState::parse(&c[2]).unwrap_or_else(|| {
                warnings.push(
                    Stage::Decomposition,
                    format!("sub-question {q:?} has no readable state; treating as End"),
                );
                NodeState::End
            });
            Some((q, state))
        })
        .collect();
    if parsed.is_empty() {
        None
    } else {
        Some(parsed)
    }
}

/// Ask the backend to split `question` into sub-questions.
///
/// Unparseable replies are regenerated up to `max_parse_retries` times; if
/// none parses, or the model returns an empty list, the question is treated
/// as atomic: `[(question, End)]`.
pub fn decompose_question(
    question: &str,
    backend: &dyn LlmBackend,
    cfg: &DecompositionConfig,
    warnings: &mut Warnings,
) -> Result<Vec<SubQuestion>, LlmError> {
    let prompt = render_prompt(PromptName::Dec, &Bindings::new().bind(Slot::Question, question))?;
    let request = GenerationRequest::new(PromptName::Dec, prompt, cfg.temperature, cfg.max_tokens);
    for _ in 0..=cfg.max_parse_retries {
        let reply = backend.generate(&request)?;
        match parse_decomposition(&reply, warnings) {
            Some(list) if list.is_empty() => return Ok(vec![(question.to_string(), NodeState::End)]),
            Some(list) => return Ok(list),
            None => continue,
        }
    }
    warnings.push(
        Stage::Decomposition,
        format!(
            "could not parse decomposition of {question:?} after {} attempt(s); treating as atomic",
            cfg.max_parse_retries + 1
        ),
    );
    Ok(vec![(question.to_string(), NodeState::End)])
}

/// Recursively decompose `question` until every leaf is `End` or sits at
/// `cfg.max_depth`.
pub fn build_mind_map(
    question: &str,
    backend: &dyn LlmBackend,
    cfg: &DecompositionConfig,
    warnings: &mut Warnings,
) -> Result<MindMap, LlmError> {
    let mut map = MindMap::single(question);
    // (node, wants decomposition); the root always does
    let mut pending = vec![NodeId::root()];
    while let Some(id) = pending.pop() {
        let (q, depth) = {
            let n = &map.nodes[&id];
            (n.question.clone(), n.depth)
        };
        if depth >= cfg.max_depth {
            map.nodes.get_mut(&id).expect("present").state = NodeState::End;
            continue;
        }
        let subs = decompose_question(&q, backend, cfg, warnings)?;
        if subs.len() == 1 && normalize(&subs[0].0) == normalize(&q) {
            // no progress: the node is atomic
            map.nodes.get_mut(&id).expect("present").state = NodeState::End;
            continue;
        }
        let mut child_ids = Vec::with_capacity(subs.len());
        for (i, (sub_q, state)) in subs.into_iter().enumerate() {
            let cid = id.child(i);
            let child_depth = depth + 1;
            let state = if child_depth >= cfg.max_depth {
                NodeState::End
            } else {
                state
            };
            map.nodes.insert(
                cid.clone(),
                MindMapNode {
                    id: cid.clone(),
                    question: sub_q,
                    depth: child_depth,
                    state,
                    parent: Some(id.clone()),
                    children: Vec::new(),
                },
            );
            child_ids.push(cid);
        }
        // explore children in sibling order
        for cid in child_ids.iter().rev() {
            if map.nodes[cid].state == NodeState::Continue {
                pending.push(cid.clone());
            }
        }
        let node = map.nodes.get_mut(&id).expect("present");
        node.state = NodeState::Continue;
        node.children = child_ids;
    }
    Ok(map)
}

/// Post-order: every node after all of its descendants, siblings in original
/// order, root last.
pub fn bottom_up_order(map: &MindMap) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(map.len());
    let mut stack: Vec<(&NodeId, bool)> = vec![(map.root_id(), false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            out.push(id.clone());
            continue;
        }
        stack.push((id, true));
        for c in map.nodes[id].children.iter().rev() {
            stack.push((c, false));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptRule, ScriptedBackend};

    const LALELI_REPLY: &str = r#"[
    {
        "Sub-question": "Where is the Laleli Mosque located?",
        "State": "End."
    },
    {
        "Sub-question": "Where is the Esma Sultan Mansion located?",
        "State": "End."
    },
    {
        "Sub-question": "Are the locations of the Laleli Mosque and the Esma Sultan Mansion in the same neighborhood?",
        "State": "End."
    }
]"#;

    fn scripted(rules: Vec<ScriptRule>) -> ScriptedBackend {
        ScriptedBackend::new("test", rules)
    }

    #[test]
    fn state_parsing() {
        assert_eq!(NodeState::parse("End."), Some(NodeState::End));
        assert_eq!(NodeState::parse("  CONTINUE "), Some(NodeState::Continue));
        assert_eq!(NodeState::parse("\"end\""), Some(NodeState::End));
        assert_eq!(NodeState::parse("stop"), None);
    }

    #[test]
    fn laleli_decomposes_into_three_end_questions() {
        let b = scripted(vec![ScriptRule::contains("Input: Are the Laleli", LALELI_REPLY)]);
        let mut w = Warnings::new();
        let subs = decompose_question(
            "Are the Laleli Mosque and Esma Sultan Mansion located in the same neighborhood?",
            &b,
            &DecompositionConfig::default(),
            &mut w,
        )
        .unwrap();
        assert_eq!(subs.len(), 3);
        assert!(subs.iter().all(|(_, s)| *s == NodeState::End));
        assert!(subs[2].0.starts_with("Are the locations of the Laleli Mosque"));
        assert!(w.is_empty());
    }

    #[test]
    fn empty_list_is_atomic() {
        let b = scripted(vec![ScriptRule::contains("decompose", "[]")]);
        let mut w = Warnings::new();
        let subs = decompose_question("Q?", &b, &DecompositionConfig::default(), &mut w).unwrap();
        assert_eq!(subs, vec![("Q?".to_string(), NodeState::End)]);
        assert_eq!(b.requests().len(), 1);
    }

    #[test]
    fn prose_falls_back_after_retries() {
        let b = scripted(vec![ScriptRule::contains("decompose", "I think it is simple.")]);
        let mut w = Warnings::new();
        let subs = decompose_question("Q?", &b, &DecompositionConfig::default(), &mut w).unwrap();
        assert_eq!(subs, vec![("Q?".to_string(), NodeState::End)]);
        assert_eq!(b.requests().len(), 2);
        assert!(w.any_from(Stage::Decomposition));
    }

    #[test]
    fn tolerates_curly_quotes_and_trailing_commas() {
        let reply = "Output: [{“Sub-question”: “Who?”, “State”: “End.”},]";
        let mut w = Warnings::new();
        let parsed = parse_decomposition(reply, &mut w).unwrap();
        assert_eq!(parsed, vec![("Who?".to_string(), NodeState::End)]);
    }

    #[test]
    fn plain_string_list_is_accepted() {
        let mut w = Warnings::new();
        let parsed = parse_decomposition(r#"{["a?", "b?"]}"#, &mut w).unwrap();
        assert_eq!(parsed.len(), 2);
    }

    #[test]
    fn max_depth_zero_is_single_node() {
        let b = scripted(vec![]);
        let mut w = Warnings::new();
        let cfg = DecompositionConfig {
            max_depth: 0,
            ..Default::default()
        };
        let m = build_mind_map("Q?", &b, &cfg, &mut w).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.root().state, NodeState::End);
        assert!(b.requests().is_empty());
        m.validate().unwrap();
    }

    #[test]
    fn scripted_three_level_tree() {
        // root → [A (Continue), B (End)]; A → [A1, A2] (End)
        let root_reply = r#"[{"Sub-question": "A?", "State": "Continue."}, {"Sub-question": "B?", "State": "End."}]"#;
        let a_reply = r#"[{"Sub-question": "A1?", "State": "End."}, {"Sub-question": "A2?", "State": "End."}]"#;
        let b = scripted(vec![
            ScriptRule::contains("Input: Root?", root_reply),
            ScriptRule::contains("Input: A?", a_reply),
        ]);
        let mut w = Warnings::new();
        let m = build_mind_map("Root?", &b, &DecompositionConfig::default(), &mut w).unwrap();
        m.validate().unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m.max_depth(), 2);
        assert_eq!(b.requests().len(), 2);
        let order: Vec<_> = bottom_up_order(&m)
            .iter()
            .map(|id| m.node(id).unwrap().question.clone())
            .collect();
        assert_eq!(order, ["A1?", "A2?", "A?", "B?", "Root?"]);
        let ids: Vec<_> = bottom_up_order(&m).into_iter().map(|i| i.to_string()).collect();
        assert_eq!(ids, ["0.0.0", "0.0.1", "0.0", "0.1", "0"]);
    }

    #[test]
    fn sole_child_equal_to_parent_stops() {
        let reply = r#"[{"Sub-question": "  q? ", "State": "Continue."}]"#;
        let b = scripted(vec![ScriptRule::contains("decompose", reply)]);
        let mut w = Warnings::new();
        let m = build_mind_map("Q?", &b, &DecompositionConfig::default(), &mut w).unwrap();
        assert_eq!(m.len(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn nested_round_trip() {
        let root_reply = r#"[{"Sub-question": "A?", "State": "End."}, {"Sub-question": "B?", "State": "End."}]"#;
        let b = scripted(vec![ScriptRule::contains("decompose", root_reply)]);
        let m = build_mind_map("R?", &b, &DecompositionConfig::default(), &mut Warnings::new()).unwrap();
        let back = MindMap::from_nested(&m.to_nested()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.questions_json(), r#"["R?","A?","B?"]"#);
    }

    #[test]
    fn validate_rejects_broken_maps() {
        let mut m = MindMap::single("Q");
        m.nodes.get_mut(&NodeId::root()).unwrap().state = NodeState::Continue;
        assert!(m.validate().is_err());
    }
}
