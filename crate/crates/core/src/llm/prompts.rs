//! The six prompt templates: decomposition, local and global key extraction,
//! reasoning, verification and rethinking.
//!
//! A rendered prompt is the head, the instruction, then each labelled slot in
//! the template's fixed order, closed by an `Output:` cue.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptName {
    Dec,
    ExtLocal,
    ExtGlobal,
    Res,
    Ver,
    Rethink,
}

impl PromptName {
    pub const ALL: [PromptName; 6] = [
        PromptName::Dec,
        PromptName::ExtLocal,
        PromptName::ExtGlobal,
        PromptName::Res,
        PromptName::Ver,
        PromptName::Rethink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptName::Dec => "dec",
            PromptName::ExtLocal => "ext_local",
            PromptName::ExtGlobal => "ext_global",
            PromptName::Res => "res",
            PromptName::Ver => "ver",
            PromptName::Rethink => "rethink",
        }
    }

    pub fn template(self) -> &'static PromptTemplate {
        match self {
            PromptName::Dec => &DEC,
            PromptName::ExtLocal => &EXT_LOCAL,
            PromptName::ExtGlobal => &EXT_GLOBAL,
            PromptName::Res => &RES,
            PromptName::Ver => &VER,
            PromptName::Rethink => &RETHINK,
        }
    }

    /// Recover the template a rendered prompt came from by its head.
    pub fn identify(prompt: &str) -> Option<PromptName> {
        Self::ALL.into_iter().find(|n| prompt.starts_with(n.template().head))
    }
}

impl fmt::Display for PromptName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named placeholder in a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Question,
    MindMap,
    Verified,
    Evidence,
    Answer,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Slot::Question => "question",
            Slot::MindMap => "mind_map",
            Slot::Verified => "verified",
            Slot::Evidence => "evidence",
            Slot::Answer => "answer",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template}: slot `{slot}` ({label}) is unbound")]
    MissingSlot {
        template: PromptName,
        slot: Slot,
        label: &'static str,
    },
}

#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<Slot, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, slot: Slot, value: impl Into<String>) -> Self {
        self.0.insert(slot, value.into());
        self
    }

    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.0.get(&slot).map(String::as_str)
    }
}

#[derive(Debug)]
pub struct PromptTemplate {
    pub name: PromptName,
    pub head: &'static str,
    pub instruction: &'static str,
    /// `(label, slot)` pairs in rendering order.
    pub sections: &'static [(&'static str, Slot)],
}

impl PromptTemplate {
    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.sections.iter().map(|&(_, s)| s)
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.head.len() + self.instruction.len() + 256);
        out.push_str(self.head);
        out.push_str("\n\n");
        out.push_str(self.instruction);
        out.push_str("\n\n");
        for &(label, slot) in self.sections {
            let value = bindings.get(slot).ok_or(PromptError::MissingSlot {
                template: self.name,
                slot,
                label,
            })?;
            out.push_str(label);
            out.push(' ');
            out.push_str(value);
            out.push_str("\n\n");
        }
        out.push_str("Output:");
        Ok(out)
    }
}

pub fn render_prompt(name: PromptName, bindings: &Bindings) -> Result<String, PromptError> {
    name.template().render(bindings)
}

const DEC_HEAD: &str = "Your task is to decompose the given question Q into sub-questions. You should based on the specific logic of the question to determine the number of sub-questions and output them sequentially.";

const DEC_INSTRUCTION: &str = r#"Please only output the decomposed sub-questions as a string in list format, where each element represents the text of a sub-question, in the form of {["subq1", "subq2", "subq3"]}. For each sub-question, if you consider the sub-question to be sufficiently simple and no further decomposition is needed, then output "End.", otherwise, output "Continue." Please strictly follow the format of the example below when answering the question.
Here are some examples:

Input: "What year did Guns N Roses perform a promo for a movie starring Arnold Schwarzenegger as a former New York Police detective?"
Output: [
    {
        "Sub-question": "What movie starring Arnold Schwarzenegger as a former New York Police detective is being referred to?",
        "State": "Continue."
    },
    {
        "Sub-question": "In what year did Guns N Roses perform a promo for the movie mentioned in sub-question #1?",
        "State": "End."
    }
]

Input: "What is the name of the fight song of the university whose main campus is in Lawrence, Kansas and whose branch campuses are in the Kansas City metropolitan area?"
Output: [
    {
        "Sub-question": "Which university has its main campus in Lawrence, Kansas and branch campuses in the Kansas City metropolitan area?",
        "State": "End."
    },
    {
        "Sub-question": "What is the name of the fight song of the university identified in sub-question #1?",
        "State": "End."
    }
]

Input: "Are the Laleli Mosque and Esma Sultan Mansion located in the same neighborhood?"
Output: [
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

const EXT_LOCAL_HEAD: &str = "Your task is to extract the entities (such as people, places, organizations, etc.) and relations (representing behaviors or properties between entities, such as verbs, attributes, or categories, etc.) involved in the input questions. These entities and relations can help answer the input questions.";

const EXT_LOCAL_INSTRUCTION: &str = "Please extract entities and relations in one of the following forms: entity, tuples, or triples from the given input List. Entity means that only an entity, i.e. <entity>. Tuples means that an entity and a relation, i.e. <entity-relation>. Triples means that complete triples, i.e. <entity-relation-entity>. Please strictly follow the format of the example below when answering the question.";

const EXT_GLOBAL_HEAD: &str = "Your task is to extract the subgraphs involved in a set of input questions.";

const EXT_GLOBAL_INSTRUCTION: &str = r#"Please extract and organize information from a set of input questions into structured subgraphs. Each subgraph represents a group of triples (subject, relation, object) that share common entities and capture the logical relationships between the questions. Here are some examples:

Input: ["What is the capital of France?", "Who is the president of France?", "What is the population of Paris?"]
Output: [("France", "capital", "Paris"), ("France", "president", "Current President"), ("Paris", "population", "Population Number")]"#;

const RES_HEAD: &str =
    "Your task is to answer the questions with the provided completed reasoning and input knowledge.";

const BRACKET_INSTRUCTION: &str = "Please note that the response must be included in square brackets [xxx].";

const VER_HEAD: &str = r#"You are a logical verification assistant. Your task is to check whether the answer to a given question is logically consistent with the provided completed reasoning and input knowledge. If the answer is consistent, respond with "right". If the answer is inconsistent, respond with "wrong"."#;

const RETHINK_HEAD: &str = "You are a reasoning and knowledge integration assistant. Your task is to re-think a question that was previously answered incorrectly by the self-verification model. Use the provided completed reasoning and input knowledge to generate a new answer.";

const RETHINK_INSTRUCTION: &str = r#"Please note, if the knowledge is insufficient to answer the question, respond with "Insufficient information, I don't know". The response must be included in square brackets [xxx]."#;

pub static DEC: PromptTemplate = PromptTemplate {
    name: PromptName::Dec,
    head: DEC_HEAD,
    instruction: DEC_INSTRUCTION,
    sections: &[("Input:", Slot::Question)],
};

pub static EXT_LOCAL: PromptTemplate = PromptTemplate {
    name: PromptName::ExtLocal,
    head: EXT_LOCAL_HEAD,
    instruction: EXT_LOCAL_INSTRUCTION,
    sections: &[("Input:", Slot::MindMap)],
};

pub static EXT_GLOBAL: PromptTemplate = PromptTemplate {
    name: PromptName::ExtGlobal,
    head: EXT_GLOBAL_HEAD,
    instruction: EXT_GLOBAL_INSTRUCTION,
    sections: &[("Input:", Slot::MindMap)],
};

pub static RES: PromptTemplate = PromptTemplate {
    name: PromptName::Res,
    head: RES_HEAD,
    instruction: BRACKET_INSTRUCTION,
    sections: &[
        ("The completed reasoning:", Slot::Verified),
        ("The knowledge graph:", Slot::Evidence),
        ("Input:", Slot::Question),
    ],
};

pub static VER: PromptTemplate = PromptTemplate {
    name: PromptName::Ver,
    head: VER_HEAD,
    instruction: BRACKET_INSTRUCTION,
    sections: &[
        ("The completed reasoning:", Slot::Verified),
        ("The knowledge graph:", Slot::Evidence),
        ("Answer:", Slot::Answer),
        ("Input:", Slot::Question),
    ],
};

pub static RETHINK: PromptTemplate = PromptTemplate {
    name: PromptName::Rethink,
    head: RETHINK_HEAD,
    instruction: RETHINK_INSTRUCTION,
    sections: &[
        ("The completed reasoning:", Slot::Verified),
        ("The knowledge graph:", Slot::Evidence),
        ("Input:", Slot::Question),
    ],
};

#[cfg(test)]
mod tests {
    use super::*;

    fn full_bindings() -> Bindings {
        Bindings::new()
            .bind(Slot::Question, "Q?")
            .bind(Slot::MindMap, "[\"Q?\"]")
            .bind(Slot::Verified, "None")
            .bind(Slot::Evidence, "(a, r, b)")
            .bind(Slot::Answer, "A")
    }

    #[test]
    fn res_sections_in_order() {
        let text = render_prompt(PromptName::Res, &full_bindings()).unwrap();
        let reasoning = text.find("The completed reasoning:").unwrap();
        let kg = text.find("The knowledge graph:").unwrap();
        let input = text.find("Input:").unwrap();
        assert!(reasoning < kg && kg < input);
        assert!(text.ends_with("Output:"));
    }

    #[test]
    fn ver_places_answer_before_input() {
        let text = render_prompt(PromptName::Ver, &full_bindings()).unwrap();
        assert!(text.find("Answer: A").unwrap() < text.find("Input: Q?").unwrap());
    }

    #[test]
    fn missing_slot_is_named() {
        let b = Bindings::new()
            .bind(Slot::Verified, "None")
            .bind(Slot::Evidence, "None");
        let err = render_prompt(PromptName::Res, &b).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingSlot {
                template: PromptName::Res,
                slot: Slot::Question,
                label: "Input:"
            }
        );
        assert!(err.to_string().contains("Input:"));
    }

    #[test]
    fn rendering_is_deterministic_and_identifiable() {
        for name in PromptName::ALL {
            let a = render_prompt(name, &full_bindings()).unwrap();
            let b = render_prompt(name, &full_bindings()).unwrap();
            assert_eq!(a, b);
            assert_eq!(PromptName::identify(&a), Some(name));
            assert!(a.contains(name.template().head));
            assert!(a.contains(name.template().instruction));
            for slot in ["{question}", "{mind_map}", "{verified}", "{evidence}", "{answer}"] {
                assert!(!a.contains(slot));
            }
        }
    }

    #[test]
    fn templates_carry_reference_phrases() {
        assert!(DEC.head.starts_with("Your task is to decompose"));
        assert!(DEC
            .instruction
            .contains("Please only output the decomposed sub-questions"));
        assert!(EXT_LOCAL.instruction.contains("<entity-relation-entity>"));
        assert!(EXT_GLOBAL.instruction.contains("What is the capital of France?"));
        assert!(RES.instruction.contains("must be included in square brackets [xxx]"));
        assert!(VER.head.contains("respond with \"right\""));
        assert!(RETHINK.instruction.contains("Insufficient information, I don't know"));
    }
}
