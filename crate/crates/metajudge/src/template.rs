//! Prompt templates with named slots.
//!
//! Templates are plain text files under `templates/` so they can be diffed
//! against their sources. Each file has a `[System Message]` block followed
//! by a `[User Message]` block; slots are written `{NAME}` with upper-case
//! names and are replaced verbatim at render time.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::backend::{ChatMessage, Role};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{0}`: missing [System Message] header")]
    MissingSystemHeader(String),
    #[error("template `{0}`: missing [User Message] header")]
    MissingUserHeader(String),
    #[error("template `{template}`: unbound slot {{{slot}}}")]
    UnboundSlot { template: String, slot: String },
    #[error("unknown template id `{0}`")]
    Unknown(String),
}

/// A parsed prompt template.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    id: String,
    system: String,
    user: String,
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Z][A-Z0-9_ ]*)\}").expect("static regex"))
}

impl PromptTemplate {
    /// Parses the `[System Message]` / `[User Message]` file layout.
    pub fn parse(id: &str, text: &str) -> Result<PromptTemplate, TemplateError> {
        const SYSTEM: &str = "[System Message]";
        const USER: &str = "[User Message]";
        let body = text.strip_prefix(SYSTEM).ok_or_else(|| {
            TemplateError::MissingSystemHeader(id.to_string())
        })?;
        let user_at = body
            .find(USER)
            .ok_or_else(|| TemplateError::MissingUserHeader(id.to_string()))?;
        let system = body[..user_at].trim().to_string();
        let user = body[user_at + USER.len()..].trim().to_string();
        Ok(PromptTemplate {
            id: id.to_string(),
            system,
            user,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn system_text(&self) -> &str {
        &self.system
    }

    pub fn user_text(&self) -> &str {
        &self.user
    }

    /// Slot names referenced by the user text, in order of first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for cap in slot_regex().captures_iter(&self.user) {
            let name = cap[1].to_string();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Renders the user text with the given slot values. Fails if any slot
    /// remains unbound; extra values are ignored.
    pub fn render_user(&self, values: &SlotValues) -> Result<String, TemplateError> {
        let mut unbound: Option<String> = None;
        let rendered = slot_regex().replace_all(&self.user, |caps: &regex::Captures<'_>| {
            let name = &caps[1];
            match values.0.get(name) {
                Some(v) => v.clone(),
                None => {
                    if unbound.is_none() {
                        unbound = Some(name.to_string());
                    }
                    String::new()
                }
            }
        });
        if let Some(slot) = unbound {
            return Err(TemplateError::UnboundSlot {
                template: self.id.clone(),
                slot,
            });
        }
        Ok(rendered.into_owned())
    }

    /// Renders the full chat request: one system message, one user message.
    pub fn render(&self, values: &SlotValues) -> Result<Vec<ChatMessage>, TemplateError> {
        let user = self.render_user(values)?;
        Ok(vec![
            ChatMessage::new(Role::System, self.system.clone()),
            ChatMessage::new(Role::User, user),
        ])
    }
}

/// Slot name → value bindings for a render.
#[derive(Debug, Clone, Default)]
pub struct SlotValues(BTreeMap<String, String>);

impl SlotValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }
}

macro_rules! builtin_templates {
    ($(($id:literal, $file:literal)),* $(,)?) => {
        /// Raw text of every built-in template, as shipped under `templates/`.
        pub const BUILTIN_SOURCES: &[(&str, &str)] = &[
            $(($id, include_str!(concat!("../templates/", $file)))),*
        ];
    };
}

builtin_templates![
    ("base", "base.txt"),
    ("cot", "cot.txt"),
    ("metric_gen", "metric_gen.txt"),
    ("metric", "metric.txt"),
    ("reference_gen", "reference_gen.txt"),
    ("reference", "reference.txt"),
    ("metric_reference", "metric_reference.txt"),
    ("swap_synthesize", "swap_synthesize.txt"),
    ("fine_grained_diff", "fine_grained_diff.txt"),
    ("multi_role", "multi_role.txt"),
    ("multi_aspect_single", "multi_aspect_single.txt"),
    ("multi_aspect_two_analysis", "multi_aspect_two_analysis.txt"),
    ("multi_aspect_two_final", "multi_aspect_two_final.txt"),
    ("gpt4_reference", "gpt4_reference.txt"),
    ("prepair_pointwise", "prepair_pointwise.txt"),
    ("prepair_pairwise", "prepair_pairwise.txt"),
    ("alpaca_eval", "alpaca_eval.txt"),
    ("arena_hard", "arena_hard.txt"),
    ("wild_bench", "wild_bench.txt"),
    ("checklist_gen", "checklist_gen.txt"),
];

/// Looks up a built-in template by id.
pub fn builtin(id: &str) -> Result<&'static PromptTemplate, TemplateError> {
    static PARSED: OnceLock<BTreeMap<&'static str, PromptTemplate>> = OnceLock::new();
    let map = PARSED.get_or_init(|| {
        BUILTIN_SOURCES
            .iter()
            .map(|(id, text)| {
                let template = PromptTemplate::parse(id, text)
                    .unwrap_or_else(|e| panic!("built-in template `{id}` is malformed: {e}"));
                (*id, template)
            })
            .collect()
    });
    map.get(id).ok_or_else(|| TemplateError::Unknown(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_parse_and_list_slots() {
        for (id, _) in BUILTIN_SOURCES {
            let t = builtin(id).unwrap();
            assert!(!t.system_text().is_empty(), "{id} has empty system text");
            assert!(!t.user_text().is_empty(), "{id} has empty user text");
        }
        assert_eq!(
            builtin("base").unwrap().slots(),
            vec!["INSTRUCTION", "OUTPUT_1", "OUTPUT_2"]
        );
        assert!(builtin("prepair_pairwise")
            .unwrap()
            .slots()
            .contains(&"PER OUTPUT ANALYSES".to_string()));
    }

    #[test]
    fn render_substitutes_slots_verbatim() {
        let t = builtin("metric").unwrap();
        let values = SlotValues::new()
            .set("INSTRUCTION", "Write a haiku.")
            .set("OUTPUT_1", "five seven five")
            .set("OUTPUT_2", "prose instead")
            .set("QUESTIONS", "Q1\nQ2");
        let user = t.render_user(&values).unwrap();
        assert!(user.contains("Write a haiku."));
        assert!(user.contains("Q1\nQ2"));
        assert!(!user.contains("{QUESTIONS}"));
    }

    #[test]
    fn render_fails_on_unbound_slot() {
        let t = builtin("base").unwrap();
        let err = t
            .render_user(&SlotValues::new().set("INSTRUCTION", "x"))
            .unwrap_err();
        assert!(matches!(err, TemplateError::UnboundSlot { .. }));
    }

    #[test]
    fn literal_json_braces_are_not_slots() {
        let t = builtin("wild_bench").unwrap();
        // The output-format example in the template body is literal text.
        assert!(t.user_text().contains(r#""choice": "[Response (A) or Response (B)]""#));
        assert_eq!(
            t.slots(),
            vec!["INSTRUCTION", "OUTPUT_1", "OUTPUT_2", "CHECKLIST"]
        );
    }

    #[test]
    fn unknown_template_id_errors() {
        assert!(matches!(builtin("nope"), Err(TemplateError::Unknown(_))));
    }
}
