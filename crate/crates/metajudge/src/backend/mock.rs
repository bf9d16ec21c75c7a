//! Deterministic mock backends.
//!
//! [`ScriptedBackend`] answers from a digest table or substring rules.
//! [`MockJudge`] simulates a judge with a fixed behavioral rule: it inspects
//! the prompt to work out which answer format the stage expects and which
//! output is shown first, then answers accordingly. Both are pure functions
//! of `(messages, params, sample_index)`, which is what makes whole-pipeline
//! runs replayable in tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cache_key, BackendError, ChatMessage, Generate, Generation, GenerationParams};
use crate::data::{Dataset, Preference};

/// Scripted mock: exact digest lookups first, then substring rules in order.
/// Requests matching neither produce a scripted-gap error.
pub struct ScriptedBackend {
    id: String,
    by_digest: BTreeMap<String, String>,
    rules: Vec<super::ScriptRule>,
}

impl ScriptedBackend {
    pub fn new(
        id: &str,
        by_digest: BTreeMap<String, String>,
        rules: Vec<super::ScriptRule>,
    ) -> Self {
        ScriptedBackend {
            id: id.to_string(),
            by_digest,
            rules,
        }
    }

    pub fn from_rules(id: &str, rules: Vec<(&str, &str)>) -> Self {
        ScriptedBackend {
            id: id.to_string(),
            by_digest: BTreeMap::new(),
            rules: rules
                .into_iter()
                .map(|(contains, response)| super::ScriptRule {
                    contains: contains.to_string(),
                    response: response.to_string(),
                })
                .collect(),
        }
    }
}

impl Generate for ScriptedBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        super::validate_request(messages)?;
        let digest = cache_key(&self.id, messages, params, sample_index);
        if let Some(response) = self.by_digest.get(&digest) {
            return Ok(Generation::text(response.clone()));
        }
        let prompt = joined(messages);
        for rule in &self.rules {
            if prompt.contains(&rule.contains) {
                return Ok(Generation::text(rule.response.clone()));
            }
        }
        Err(BackendError::ScriptGap {
            request_digest: digest,
        })
    }
}

fn joined(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Behavioral rule of a [`MockJudge`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum JudgeRule {
    /// Prefers whichever output is shown first, regardless of content: a
    /// position-bias simulator that scores exactly 50% swap-averaged.
    AlwaysFirst,
    /// Mirror image of `AlwaysFirst`.
    AlwaysSecond,
    /// Agrees with the gold label in both directions (accuracy 1.0).
    Oracle,
    /// Disagrees with the gold label in both directions (accuracy 0.0).
    AntiOracle,
    /// Prefers the first-shown output for `sample_index < first_below`,
    /// otherwise the second-shown. Splits self-consistency votes.
    SampleSplit { first_below: u32 },
}

/// Which side of the presented pair the rule prefers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    First,
    Second,
}

impl Side {
    fn flip(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }
}

/// The answer format a terminal prompt demands, recognized from its text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnswerShape {
    ModelIdentifier,
    JsonChoice,
    AnswerSentence,
    OutputSentence,
    LabelOnly,
    MetricQuestions,
    Checklist,
    PointwiseAnalysis,
    AspectAnalysis,
    FreeText,
}

fn first_label_marker(shape: AnswerShape) -> Option<&'static str> {
    match shape {
        AnswerShape::LabelOnly | AnswerShape::OutputSentence => Some("# Output (a):"),
        AnswerShape::AnswerSentence => Some("<|The Start of Answer (a)|>"),
        AnswerShape::JsonChoice => Some("<|begin_of_response_A|>"),
        AnswerShape::ModelIdentifier => Some(r#""model_identifier": "m""#),
        _ => None,
    }
}

fn detect_shape(prompt: &str) -> AnswerShape {
    if prompt.contains(r#"either "Model (m)" or "Model (M)""#) {
        AnswerShape::ModelIdentifier
    } else if prompt.contains(r#""choice": "[Response (A) or Response (B)]""#) {
        AnswerShape::JsonChoice
    } else if prompt.contains(r#""Therefore, Answer (a) is better.""#) {
        AnswerShape::AnswerSentence
    } else if prompt.contains(r#""Therefore, Output (a) is better.""#) {
        AnswerShape::OutputSentence
    } else if prompt.contains(r#"ONLY "Output (a)" or "Output (b)""#) {
        AnswerShape::LabelOnly
    } else if prompt.contains("# Please give your questions here:") {
        AnswerShape::MetricQuestions
    } else if prompt.contains("# Please give your checklist here:") {
        AnswerShape::Checklist
    } else if prompt.contains("# Provide your explanation:") {
        AnswerShape::PointwiseAnalysis
    } else if prompt.contains("# Your analysis:") {
        AnswerShape::AspectAnalysis
    } else {
        AnswerShape::FreeText
    }
}

fn verdict_text(shape: AnswerShape, side: Side) -> String {
    match (shape, side) {
        (AnswerShape::ModelIdentifier, Side::First) => "Model (m)".into(),
        (AnswerShape::ModelIdentifier, Side::Second) => "Model (M)".into(),
        (AnswerShape::JsonChoice, Side::First) => {
            "{\"analysis of A\": \"follows the task\", \"analysis of B\": \"weaker\", \
             \"reason of A=B\": \"both fluent\", \"reason of A>B\": \"closer to the query\", \
             \"reason of B>A\": \"none\", \"choice\": \"Response (A)\"}"
                .into()
        }
        (AnswerShape::JsonChoice, Side::Second) => {
            "{\"analysis of A\": \"weaker\", \"analysis of B\": \"follows the task\", \
             \"reason of A=B\": \"both fluent\", \"reason of A>B\": \"none\", \
             \"reason of B>A\": \"closer to the query\", \"choice\": \"Response (B)\"}"
                .into()
        }
        (AnswerShape::AnswerSentence, Side::First) => {
            "Comparing both answers against my own, the first stays closer to the prompt. \
             Therefore, Answer (a) is better."
                .into()
        }
        (AnswerShape::AnswerSentence, Side::Second) => {
            "Comparing both answers against my own, the second stays closer to the prompt. \
             Therefore, Answer (b) is better."
                .into()
        }
        (AnswerShape::OutputSentence, Side::First) => {
            "The first output executes the instruction more faithfully. \
             Therefore, Output (a) is better."
                .into()
        }
        (AnswerShape::OutputSentence, Side::Second) => {
            "The second output executes the instruction more faithfully. \
             Therefore, Output (b) is better."
                .into()
        }
        (AnswerShape::LabelOnly, Side::First) => "Output (a)".into(),
        (AnswerShape::LabelOnly, Side::Second) => "Output (b)".into(),
        _ => unreachable!("verdict_text called for a non-verdict shape"),
    }
}

fn filler_text(shape: AnswerShape) -> &'static str {
    match shape {
        AnswerShape::MetricQuestions => {
            "1. Does the output execute exactly what the instruction asks for?\n\
             2. Is every claim in the output accurate?\n\
             3. Does the output avoid adding or omitting content?"
        }
        AnswerShape::Checklist => {
            "1. Does the response address the query directly?\n\
             2. Is the response factually accurate?\n\
             3. Does the response respect all stated constraints?"
        }
        AnswerShape::PointwiseAnalysis => {
            "The output addresses the instruction but drifts on one detail; \
             its core claims hold up under inspection."
        }
        AnswerShape::AspectAnalysis => {
            "Output (a) and Output (b) are both fluent; they differ in how \
             precisely they execute the instruction."
        }
        AnswerShape::FreeText => "A sensible response that directly addresses the request.",
        _ => unreachable!("filler_text called for a verdict shape"),
    }
}

/// One dataset entry the oracle rules can recognize inside a prompt.
#[derive(Debug, Clone)]
struct GoldRow {
    output1: String,
    output2: String,
    gold: Preference,
}

/// Deterministic judge backend driven by a [`JudgeRule`].
pub struct MockJudge {
    id: String,
    rule: JudgeRule,
    lookup: Vec<GoldRow>,
}

impl MockJudge {
    pub fn from_rule(id: &str, rule: JudgeRule, datasets: &[Dataset]) -> MockJudge {
        let lookup = datasets
            .iter()
            .flat_map(|d| d.instances())
            .map(|i| GoldRow {
                output1: i.output1.clone(),
                output2: i.output2.clone(),
                gold: i.gold,
            })
            .collect();
        MockJudge {
            id: id.to_string(),
            rule,
            lookup,
        }
    }

    pub fn always_first() -> MockJudge {
        MockJudge {
            id: "mock-always-first".into(),
            rule: JudgeRule::AlwaysFirst,
            lookup: Vec::new(),
        }
    }

    pub fn always_second() -> MockJudge {
        MockJudge {
            id: "mock-always-second".into(),
            rule: JudgeRule::AlwaysSecond,
            lookup: Vec::new(),
        }
    }

    /// A judge that always agrees with the gold labels of `dataset`.
    pub fn oracle(dataset: &Dataset) -> MockJudge {
        MockJudge::from_rule(
            "mock-oracle",
            JudgeRule::Oracle,
            std::slice::from_ref(dataset),
        )
    }

    /// A judge that always disagrees with the gold labels of `dataset`.
    pub fn anti_oracle(dataset: &Dataset) -> MockJudge {
        MockJudge::from_rule(
            "mock-anti-oracle",
            JudgeRule::AntiOracle,
            std::slice::from_ref(dataset),
        )
    }

    pub fn sample_split(first_below: u32) -> MockJudge {
        MockJudge {
            id: format!("mock-split-{first_below}"),
            rule: JudgeRule::SampleSplit { first_below },
            lookup: Vec::new(),
        }
    }

    pub fn with_id(mut self, id: &str) -> MockJudge {
        self.id = id.to_string();
        self
    }

    /// Finds the dataset row whose outputs appear in the prompt, and whether
    /// `output1` carries the first label — `(a)`, `A`, or `m`.
    ///
    /// Text order alone is not enough: the conflict-synthesis prompt lists
    /// the `(b)` block before the `(a)` block, so orientation is read from
    /// whichever output follows the first-label marker.
    fn locate(&self, prompt: &str, shape: AnswerShape) -> Option<(&GoldRow, bool)> {
        let anchor = first_label_marker(shape)
            .and_then(|marker| prompt.find(marker))
            .unwrap_or(0);
        let tail = &prompt[anchor..];
        for row in &self.lookup {
            if !prompt.contains(&row.output1) || !prompt.contains(&row.output2) {
                continue;
            }
            let first_is_output1 = match (tail.find(&row.output1), tail.find(&row.output2)) {
                (Some(a), Some(b)) => a < b,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => continue,
            };
            return Some((row, first_is_output1));
        }
        None
    }

    fn preferred_side(
        &self,
        prompt: &str,
        shape: AnswerShape,
        sample_index: u32,
        digest: &str,
    ) -> Result<Side, BackendError> {
        match &self.rule {
            JudgeRule::AlwaysFirst => Ok(Side::First),
            JudgeRule::AlwaysSecond => Ok(Side::Second),
            JudgeRule::SampleSplit { first_below } => Ok(if sample_index < *first_below {
                Side::First
            } else {
                Side::Second
            }),
            JudgeRule::Oracle | JudgeRule::AntiOracle => {
                let (row, first_is_output1) =
                    self.locate(prompt, shape)
                        .ok_or_else(|| BackendError::ScriptGap {
                            request_digest: digest.to_string(),
                        })?;
                let gold_side = match (row.gold, first_is_output1) {
                    (Preference::Output1, true) | (Preference::Output2, false) => Side::First,
                    _ => Side::Second,
                };
                Ok(match self.rule {
                    JudgeRule::Oracle => gold_side,
                    _ => gold_side.flip(),
                })
            }
        }
    }
}

impl Generate for MockJudge {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        super::validate_request(messages)?;
        let prompt = joined(messages);
        let shape = detect_shape(&prompt);
        let text = match shape {
            AnswerShape::ModelIdentifier
            | AnswerShape::JsonChoice
            | AnswerShape::AnswerSentence
            | AnswerShape::OutputSentence
            | AnswerShape::LabelOnly => {
                let digest = cache_key(&self.id, messages, params, sample_index);
                let side = self.preferred_side(&prompt, shape, sample_index, &digest)?;
                verdict_text(shape, side)
            }
            other => filler_text(other).to_string(),
        };
        Ok(Generation::text(text))
    }
}
