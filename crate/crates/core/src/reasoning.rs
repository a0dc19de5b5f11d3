//! Bottom-up reasoning with self-verification.
//!
//! Each node, in post-order, goes through
//!
//! ```text
//! answer ──► verify ──right──► final = candidate
//!               │
//!             wrong
//!               ▼
//!            rethink ─────────► final = rethink reply
//! ```
//!
//! and any final containing "I don't know" is recorded as an abstention with
//! the canonical phrase. The rethink reply is not verified again. Every
//! processed node joins the verified set handed to later nodes.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Stage, Warnings};
use crate::llm::{
    extract_bracketed, prompts::render_prompt, Bindings, GenerationRequest, LlmBackend, LlmError, PromptName, Slot,
    DEFAULT_MAX_TOKENS,
};
use crate::mindmap::{bottom_up_order, MindMap, NodeId};
use crate::retrieval::RetrievedTripleSet;

pub const ABSTENTION_PHRASE: &str = "Insufficient information, I don't know";

/// True iff the text contains "i don't know", ignoring case, whitespace runs
/// and the apostrophe style.
pub fn detect_abstention(answer: &str) -> bool {
    let folded: String = answer
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02bc}' | '`' => '\'',
            other => other,
        })
        .collect::<String>()
        .to_lowercase();
    let folded = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    folded.contains("i don't know")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedAnswer {
    pub node: NodeId,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerifiedSet(Vec<VerifiedAnswer>);

impl VerifiedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, answer: VerifiedAnswer) {
        self.0.push(answer);
    }

    pub fn iter(&self) -> impl Iterator<Item = &VerifiedAnswer> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One `("question", "answer")` tuple per line, or `None` when empty.
    pub fn render(&self) -> String {
        if self.0.is_empty() {
            return "None".into();
        }
        self.0
            .iter()
            .map(|v| {
                format!(
                    "({}, {})",
                    serde_json::to_string(&v.question).expect("string"),
                    serde_json::to_string(&v.answer).expect("string")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Evidence block for prompts: one `(head, relation, tail)` per line in kept
/// order, truncated at `cap`, or `None` when empty.
pub fn render_evidence(evidence: &RetrievedTripleSet, cap: usize) -> String {
    if evidence.kept.is_empty() || cap == 0 {
        return "None".into();
    }
    evidence
        .triples()
        .take(cap)
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Answered,
    Abstained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: NodeId,
    pub question: String,
    pub candidate: String,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rethink: Option<String>,
    pub outcome: Outcome,
    #[serde(rename = "final")]
    pub final_answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub records: Vec<NodeRecord>,
    pub final_answer: String,
    pub answer_calls: usize,
    pub verify_calls: usize,
    pub rethink_calls: usize,
    #[serde(default, skip_serializing_if = "Warnings::is_empty")]
    pub warnings: Warnings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasoningConfig {
    /// When off, every verdict is taken as right and rethink never runs.
    pub verification_enabled: bool,
    pub max_evidence_triples: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self {
            verification_enabled: true,
            max_evidence_triples: 64,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("reasoning failed at node {node}: {source}")]
pub struct SolveError {
    pub node: NodeId,
    #[source]
    pub source: ReasoningError,
    pub partial: Box<ReasoningTrace>,
}

/// Prompt-facing context shared by every node of one question: the two
/// backends and the rendered evidence block.
pub struct Reasoner<'a> {
    res: &'a dyn LlmBackend,
    ver: &'a dyn LlmBackend,
    cfg: ReasoningConfig,
    evidence: String,
}

impl<'a> Reasoner<'a> {
    pub fn new(
        evidence: &RetrievedTripleSet,
        res: &'a dyn LlmBackend,
        ver: &'a dyn LlmBackend,
        cfg: ReasoningConfig,
    ) -> Self {
        Self {
            res,
            ver,
            cfg,
            evidence: render_evidence(evidence, cfg.max_evidence_triples),
        }
    }

    fn request(&self, template: PromptName, bindings: Bindings) -> Result<GenerationRequest, LlmError> {
        let prompt = render_prompt(template, &bindings)?;
        Ok(GenerationRequest::new(
            template,
            prompt,
            self.cfg.temperature,
            self.cfg.max_tokens,
        ))
    }

    fn context(&self, question: &str, verified: &VerifiedSet) -> Bindings {
        Bindings::new()
            .bind(Slot::Verified, verified.render())
            .bind(Slot::Evidence, self.evidence.clone())
            .bind(Slot::Question, question)
    }

    fn extract_answer(stage: Stage, node: &str, reply: &str, warnings: &mut Warnings) -> String {
        match extract_bracketed(reply) {
            Some(inner) if !inner.is_empty() => inner.to_string(),
            _ => {
                let raw = reply.trim();
                if raw.is_empty() {
                    warnings.push_for_node(stage, node, "empty reply; recording abstention");
                    ABSTENTION_PHRASE.to_string()
                } else {
                    warnings.push_for_node(stage, node, "reply has no bracketed answer; using raw text");
                    raw.to_string()
                }
            }
        }
    }

    /// Candidate answer for one sub-question.
    pub fn answer_node(
        &self,
        node: &str,
        question: &str,
        verified: &VerifiedSet,
        warnings: &mut Warnings,
    ) -> Result<String, LlmError> {
        let req = self.request(PromptName::Res, self.context(question, verified))?;
        let reply = self.res.generate(&req)?;
        Ok(Self::extract_answer(Stage::Reasoning, node, &reply, warnings))
    }

    /// Verifier verdict: `[right]` → true, `[wrong]` → false, anything else
    /// is treated as a rejection and warned about.
    pub fn verify_answer(
        &self,
        node: &str,
        question: &str,
        answer: &str,
        verified: &VerifiedSet,
        warnings: &mut Warnings,
    ) -> Result<bool, LlmError> {
        let req = self.request(
            PromptName::Ver,
            self.context(question, verified).bind(Slot::Answer, answer),
        )?;
        let reply = self.ver.generate(&req)?;
        let word = extract_bracketed(&reply).unwrap_or(reply.as_str());
        let word = word
            .trim()
            .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
            .to_ascii_lowercase();
        match word.as_str() {
            "right" => Ok(true),
            "wrong" => Ok(false),
            _ => {
                warnings.push_for_node(
                    Stage::Verification,
                    node,
                    format!("unreadable verdict {:?}; treating as wrong", reply.trim()),
                );
                Ok(false)
            }
        }
    }

    /// Regenerate an answer after a rejection. Calling this for an accepted
    /// answer is a contract violation.
    pub fn rethink_node(
        &self,
        node: &str,
        question: &str,
        verified: &VerifiedSet,
        verdict: bool,
        warnings: &mut Warnings,
    ) -> Result<String, ReasoningError> {
        if verdict {
            return Err(ReasoningError::ContractViolation(format!(
                "rethink requested for node {node} whose answer was verified"
            )));
        }
        let req = self.request(PromptName::Rethink, self.context(question, verified))?;
        let reply = self.res.generate(&req)?;
        Ok(Self::extract_answer(Stage::Rethink, node, &reply, warnings))
    }

    pub fn solve(&self, map: &MindMap) -> Result<ReasoningTrace, SolveError> {
        let mut trace = ReasoningTrace::default();
        let mut verified = VerifiedSet::new();
        for id in bottom_up_order(map) {
            let node = map.node(&id).expect("order yields map nodes");
            if let Err(source) = self.step(&id, &node.question, &mut verified, &mut trace) {
                return Err(SolveError {
                    node: id,
                    source,
                    partial: Box::new(trace),
                });
            }
        }
        trace.final_answer = trace.records.last().map(|r| r.final_answer.clone()).unwrap_or_default();
        Ok(trace)
    }

    fn step(
        &self,
        id: &NodeId,
        question: &str,
        verified: &mut VerifiedSet,
        trace: &mut ReasoningTrace,
    ) -> Result<(), ReasoningError> {
        let node = id.as_str();
        trace.answer_calls += 1;
        let candidate = self.answer_node(node, question, verified, &mut trace.warnings)?;
        let verdict = if self.cfg.verification_enabled {
            trace.verify_calls += 1;
            self.verify_answer(node, question, &candidate, verified, &mut trace.warnings)?
        } else {
            true
        };
        let rethink = if verdict {
            None
        } else {
            trace.rethink_calls += 1;
            Some(self.rethink_node(node, question, verified, verdict, &mut trace.warnings)?)
        };
        let chosen = rethink.as_deref().unwrap_or(&candidate);
        let (outcome, final_answer) = if detect_abstention(chosen) {
            (Outcome::Abstained, ABSTENTION_PHRASE.to_string())
        } else {
            (Outcome::Answered, chosen.to_string())
        };
        verified.push(VerifiedAnswer {
            node: id.clone(),
            question: question.to_string(),
            answer: final_answer.clone(),
        });
        trace.records.push(NodeRecord {
            node: id.clone(),
            question: question.to_string(),
            candidate,
            verdict,
            rethink,
            outcome,
            final_answer,
        });
        Ok(())
    }
}

/// Run the state machine over every node of `map`, leaves first.
pub fn solve(
    map: &MindMap,
    evidence: &RetrievedTripleSet,
    res: &dyn LlmBackend,
    ver: &dyn LlmBackend,
    cfg: &ReasoningConfig,
) -> Result<ReasoningTrace, SolveError> {
    Reasoner::new(evidence, res, ver, *cfg).solve(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Key;
    use crate::kg_store::Triple;
    use crate::llm::{ScriptRule, ScriptedBackend};
    use crate::retrieval::ScoredTriple;

    fn evidence() -> RetrievedTripleSet {
        RetrievedTripleSet {
            kept: vec![ScoredTriple {
                triple: Triple::new("David Beckham", "recruited_by", "Alex Ferguson").unwrap(),
                best_key: Key::entity("David Beckham"),
                score: 0.8,
            }],
            candidate_count: 1,
            epsilon: 0.7,
        }
    }

    fn backend(rules: Vec<ScriptRule>) -> ScriptedBackend {
        ScriptedBackend::new("t", rules)
    }

    #[test]
    fn abstention_detection() {
        assert!(detect_abstention("Insufficient information, I don't know"));
        assert!(detect_abstention("I don\u{2019}t know"));
        assert!(detect_abstention("i  DON'T   know."));
        assert!(!detect_abstention("Alex Ferguson"));
        assert!(!detect_abstention("I do know"));
    }

    #[test]
    fn answer_extracts_brackets() {
        let res = backend(vec![ScriptRule::contains("Your task is to answer", "[Alex Ferguson]")]);
        let r = Reasoner::new(&evidence(), &res, &res, ReasoningConfig::default());
        let mut w = Warnings::new();
        let a = r
            .answer_node("0", "Who recruited David Beckham?", &VerifiedSet::new(), &mut w)
            .unwrap();
        assert_eq!(a, "Alex Ferguson");
        let prompt = &res.requests()[0].prompt;
        assert!(prompt.contains("The knowledge graph: (David Beckham, recruited_by, Alex Ferguson)"));
        assert!(prompt.contains("The completed reasoning: None"));
        assert!(w.is_empty());
    }

    #[test]
    fn answer_keeps_abstention_text() {
        let res = backend(vec![ScriptRule::contains(
            "Your task is to answer",
            "[Insufficient information, I don't know]",
        )]);
        let r = Reasoner::new(&evidence(), &res, &res, ReasoningConfig::default());
        let a = r
            .answer_node("0", "Q", &VerifiedSet::new(), &mut Warnings::new())
            .unwrap();
        assert_eq!(a, "Insufficient information, I don't know");
    }

    #[test]
    fn unbracketed_answer_falls_back_to_raw() {
        let res = backend(vec![ScriptRule::contains(
            "Your task is to answer",
            "  Probably Paris ",
        )]);
        let r = Reasoner::new(&RetrievedTripleSet::empty(0.7), &res, &res, ReasoningConfig::default());
        let mut w = Warnings::new();
        assert_eq!(
            r.answer_node("0", "Q", &VerifiedSet::new(), &mut w).unwrap(),
            "Probably Paris"
        );
        assert!(w.any_from(Stage::Reasoning));
        assert!(res.requests()[0].prompt.contains("The knowledge graph: None"));
    }

    #[test]
    fn verdict_parsing() {
        for (reply, expect, warns) in [
            ("[right]", true, false),
            ("[WRONG]", false, false),
            ("maybe", false, true),
            ("Right.", true, false),
        ] {
            let ver = backend(vec![ScriptRule::contains("logical verification", reply)]);
            let r = Reasoner::new(&evidence(), &ver, &ver, ReasoningConfig::default());
            let mut w = Warnings::new();
            assert_eq!(
                r.verify_answer("0", "Q", "A", &VerifiedSet::new(), &mut w).unwrap(),
                expect,
                "{reply}"
            );
            assert_eq!(w.any_from(Stage::Verification), warns, "{reply}");
        }
    }

    #[test]
    fn rethink_requires_rejection() {
        let res = backend(vec![ScriptRule::contains("re-think", "[Carabao Cup]")]);
        let r = Reasoner::new(&evidence(), &res, &res, ReasoningConfig::default());
        let mut w = Warnings::new();
        assert_eq!(
            r.rethink_node("0", "Q", &VerifiedSet::new(), false, &mut w).unwrap(),
            "Carabao Cup"
        );
        assert!(matches!(
            r.rethink_node("0", "Q", &VerifiedSet::new(), true, &mut w),
            Err(ReasoningError::ContractViolation(_))
        ));
        assert_eq!(res.requests().len(), 1);
    }

    #[test]
    fn single_node_with_rejection_and_rethink() {
        let b = backend(vec![
            ScriptRule::contains("Your task is to answer", "[League Cup]"),
            ScriptRule::contains("logical verification", "[wrong]"),
            ScriptRule::contains("re-think", "[Carabao Cup]"),
        ]);
        let map = MindMap::single("Which cup?");
        let t = solve(&map, &evidence(), &b, &b, &ReasoningConfig::default()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.final_answer, "Carabao Cup");
        assert_eq!((t.answer_calls, t.verify_calls, t.rethink_calls), (1, 1, 1));
        assert_eq!(t.records[0].rethink.as_deref(), Some("Carabao Cup"));
        assert!(!t.records[0].verdict);
    }

    #[test]
    fn rethink_abstention_is_recorded() {
        let b = backend(vec![
            ScriptRule::contains("Your task is to answer", "[League Cup]"),
            ScriptRule::contains("logical verification", "[wrong]"),
            ScriptRule::contains("re-think", "[Insufficient information, I don't know]"),
        ]);
        let t = solve(&MindMap::single("Q"), &evidence(), &b, &b, &ReasoningConfig::default()).unwrap();
        assert_eq!(t.records[0].outcome, Outcome::Abstained);
        assert_eq!(t.final_answer, ABSTENTION_PHRASE);
    }

    #[test]
    fn backend_failure_keeps_partial_trace() {
        let b = backend(vec![ScriptRule::contains("Your task is to answer", "[x]")]);
        let err = solve(&MindMap::single("Q"), &evidence(), &b, &b, &ReasoningConfig::default()).unwrap_err();
        assert!(matches!(err.source, ReasoningError::Llm(LlmError::ScriptMiss { .. })));
        assert_eq!(err.partial.answer_calls, 1);
        assert!(err.partial.records.is_empty());
    }

    #[test]
    fn evidence_is_capped() {
        let mut ev = evidence();
        ev.kept.push(ScoredTriple {
            triple: Triple::new("a", "r", "b").unwrap(),
            best_key: Key::entity("a"),
            score: 0.75,
        });
        assert_eq!(render_evidence(&ev, 1).lines().count(), 1);
        assert_eq!(render_evidence(&ev, 64).lines().count(), 2);
    }

    #[test]
    fn verified_set_rendering() {
        let mut v = VerifiedSet::new();
        assert_eq!(v.render(), "None");
        v.push(VerifiedAnswer {
            node: NodeId::root(),
            question: "Who?".into(),
            answer: "Him".into(),
        });
        assert_eq!(v.render(), r#"("Who?", "Him")"#);
    }
}
