//! Deterministic extraction of a local verdict from raw judge text.
//!
//! Every parser is a total function: malformed input yields
//! [`LocalChoice::Invalid`], never an error. Lenient mode is the default
//! because weak judges wrap their answers in prose; strict mode is available
//! for audits.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::LocalChoice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leniency {
    Strict,
    Lenient,
}

impl Default for Leniency {
    fn default() -> Self {
        Leniency::Lenient
    }
}

/// Which terminal-stage contract a parser enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserKind {
    /// Bare `Output (a)` / `Output (b)` answers.
    LabelOnly,
    /// Explanations ending `Therefore, Output (a) is better.`
    VerdictSentence,
    /// Same contract over `Answer (a)` / `Answer (b)`.
    AnswerSentence,
    /// JSON object with a `"choice"` field of `Response (A)` / `Response (B)`.
    JsonChoice,
    /// `Model (m)` / `Model (M)` identifiers, case-sensitive.
    ModelIdentifier,
}

impl ParserKind {
    pub fn parse(&self, text: &str, leniency: Leniency) -> LocalChoice {
        match self {
            ParserKind::LabelOnly => parse_label_only(text, leniency),
            ParserKind::VerdictSentence => parse_verdict_sentence(text, "Output", leniency),
            ParserKind::AnswerSentence => parse_verdict_sentence(text, "Answer", leniency),
            ParserKind::JsonChoice => parse_json_choice(text, leniency),
            ParserKind::ModelIdentifier => parse_model_identifier(text, leniency),
        }
    }
}

fn letter_choice(letter: &str) -> LocalChoice {
    match letter {
        "a" | "A" => LocalChoice::FirstShown,
        "b" | "B" => LocalChoice::SecondShown,
        _ => LocalChoice::Invalid,
    }
}

/// Parses a bare-label answer: the trimmed text must equal one label
/// (letter case-insensitive). Leniently, a response mentioning exactly one
/// of the two labels anywhere still counts.
pub fn parse_label_only(text: &str, leniency: Leniency) -> LocalChoice {
    static STRICT: OnceLock<Regex> = OnceLock::new();
    static ANY: OnceLock<Regex> = OnceLock::new();
    let strict =
        STRICT.get_or_init(|| Regex::new(r"^(?i)output \(([ab])\)[.!]?$").expect("static regex"));
    let trimmed = text.trim();
    if let Some(cap) = strict.captures(trimmed) {
        return letter_choice(&cap[1].to_ascii_lowercase());
    }
    if leniency == Leniency::Strict {
        return LocalChoice::Invalid;
    }
    let any = ANY.get_or_init(|| Regex::new(r"(?i)output \(([ab])\)").expect("static regex"));
    exactly_one_kind(any.captures_iter(text).map(|c| c[1].to_ascii_lowercase()))
}

/// Returns the choice if all matched letters agree on one label.
fn exactly_one_kind(letters: impl Iterator<Item = String>) -> LocalChoice {
    let mut found: Option<String> = None;
    for letter in letters {
        match &found {
            None => found = Some(letter),
            Some(prev) if *prev == letter => {}
            Some(_) => return LocalChoice::Invalid,
        }
    }
    found.map_or(LocalChoice::Invalid, |l| letter_choice(&l))
}

/// Parses an explanation ending in a verdict sentence. The LAST occurrence
/// wins; earlier label mentions are ignored. `label_word` is `Output` or
/// `Answer` depending on the prompt contract.
pub fn parse_verdict_sentence(text: &str, label_word: &str, leniency: Leniency) -> LocalChoice {
    static OUTPUT: OnceLock<(Regex, Regex)> = OnceLock::new();
    static ANSWER: OnceLock<(Regex, Regex)> = OnceLock::new();
    let build = |word: &str| {
        let full = Regex::new(&format!(
            r"(?i)therefore,?\s+{word}\s*\(([ab])\)\s+is\s+better"
        ))
        .expect("static regex");
        let bare = Regex::new(&format!(r"(?i){word}\s*\(([ab])\)\s+is\s+better"))
            .expect("static regex");
        (full, bare)
    };
    let (full, bare) = match label_word {
        "Answer" => ANSWER.get_or_init(|| build("Answer")),
        _ => OUTPUT.get_or_init(|| build("Output")),
    };
    if let Some(cap) = full.captures_iter(text).last() {
        return letter_choice(&cap[1].to_ascii_lowercase());
    }
    if leniency == Leniency::Strict {
        return LocalChoice::Invalid;
    }
    // Tolerate a dropped "Therefore": take the last "<word> (x) is better".
    bare.captures_iter(text)
        .last()
        .map_or(LocalChoice::Invalid, |cap| {
            letter_choice(&cap[1].to_ascii_lowercase())
        })
}

/// Extracts the outermost JSON object (tolerating code fences) and reads its
/// `"choice"` field.
pub fn parse_json_choice(text: &str, leniency: Leniency) -> LocalChoice {
    let Some(object) = extract_json_object(text, leniency) else {
        return LocalChoice::Invalid;
    };
    let Some(choice) = object.get("choice").and_then(|v| v.as_str()) else {
        return LocalChoice::Invalid;
    };
    match leniency {
        Leniency::Strict => match choice {
            "Response (A)" => LocalChoice::FirstShown,
            "Response (B)" => LocalChoice::SecondShown,
            _ => LocalChoice::Invalid,
        },
        Leniency::Lenient => {
            static RE: OnceLock<Regex> = OnceLock::new();
            let re = RE.get_or_init(|| {
                Regex::new(r"^(?i)response\s*\(?([ab])\)?$").expect("static regex")
            });
            let cleaned = choice.trim().trim_end_matches(['.', '!', ',']).trim();
            re.captures(cleaned)
                .map_or(LocalChoice::Invalid, |cap| {
                    letter_choice(&cap[1].to_ascii_lowercase())
                })
        }
    }
}

fn extract_json_object(text: &str, leniency: Leniency) -> Option<serde_json::Value> {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let fence = FENCE.get_or_init(|| {
        Regex::new(r"(?s)```(?:json)?\s*(.*?)```").expect("static regex")
    });
    let mut candidates: Vec<String> = Vec::new();
    for cap in fence.captures_iter(text) {
        candidates.push(cap[1].to_string());
    }
    if let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) {
        if start < end {
            candidates.push(text[start..=end].to_string());
        }
    }
    for candidate in candidates {
        let attempt = candidate.trim();
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(attempt) {
            if v.is_object() {
                return Some(v);
            }
        }
        if leniency == Leniency::Lenient {
            // Models copy the trailing comma from the format example.
            static TRAILING: OnceLock<Regex> = OnceLock::new();
            let trailing = TRAILING
                .get_or_init(|| Regex::new(r",\s*([}\]])").expect("static regex"));
            let repaired = trailing.replace_all(attempt, "$1");
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&repaired) {
                if v.is_object() {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Parses `Model (m)` / `Model (M)` answers. The identifiers differ only by
/// case, so matching is case-SENSITIVE. Leniently accepts a bare `m`/`M` or
/// a response mentioning exactly one identifier.
pub fn parse_model_identifier(text: &str, leniency: Leniency) -> LocalChoice {
    let trimmed = text.trim();
    match trimmed {
        "Model (m)" => return LocalChoice::FirstShown,
        "Model (M)" => return LocalChoice::SecondShown,
        _ => {}
    }
    if leniency == Leniency::Strict {
        return LocalChoice::Invalid;
    }
    match trimmed.trim_end_matches(['.', '!']) {
        "m" => return LocalChoice::FirstShown,
        "M" => return LocalChoice::SecondShown,
        "Model (m)" => return LocalChoice::FirstShown,
        "Model (M)" => return LocalChoice::SecondShown,
        _ => {}
    }
    let lower = text.matches("Model (m)").count();
    let upper = text.matches("Model (M)").count();
    match (lower > 0, upper > 0) {
        (true, false) => LocalChoice::FirstShown,
        (false, true) => LocalChoice::SecondShown,
        _ => LocalChoice::Invalid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use LocalChoice::{FirstShown, Invalid, SecondShown};

    #[test]
    fn label_only_cases() {
        assert_eq!(parse_label_only("Output (a)", Leniency::Strict), FirstShown);
        assert_eq!(parse_label_only("  output (B)\n", Leniency::Lenient), SecondShown);
        assert_eq!(parse_label_only("Both are good", Leniency::Lenient), Invalid);
        assert_eq!(
            parse_label_only("I pick Output (b).", Leniency::Strict),
            Invalid
        );
        assert_eq!(
            parse_label_only("I pick Output (b).", Leniency::Lenient),
            SecondShown
        );
        assert_eq!(
            parse_label_only("Output (a) or Output (b)?", Leniency::Lenient),
            Invalid
        );
    }

    #[test]
    fn verdict_sentence_takes_last_occurrence() {
        assert_eq!(
            parse_verdict_sentence(
                "Output (a) is concise... Therefore, Output (b) is better.",
                "Output",
                Leniency::Lenient
            ),
            SecondShown
        );
        assert_eq!(
            parse_verdict_sentence(
                "Therefore, Output (b) is better. Wait. Therefore, Output (a) is better.",
                "Output",
                Leniency::Lenient
            ),
            FirstShown
        );
        assert_eq!(
            parse_verdict_sentence("No verdict sentence here.", "Output", Leniency::Lenient),
            Invalid
        );
        assert_eq!(
            parse_verdict_sentence(
                "...Therefore, Answer (b) is better.",
                "Answer",
                Leniency::Lenient
            ),
            SecondShown
        );
        // "Output (a) is better" without "Therefore" only passes leniently.
        assert_eq!(
            parse_verdict_sentence("Output (a) is better overall.", "Output", Leniency::Strict),
            Invalid
        );
        assert_eq!(
            parse_verdict_sentence("Output (a) is better overall.", "Output", Leniency::Lenient),
            FirstShown
        );
    }

    #[test]
    fn json_choice_cases() {
        let fenced = "Analysis...\n```json\n{\"analysis of A\": \"ok\", \"choice\": \"Response (A)\"}\n```";
        assert_eq!(parse_json_choice(fenced, Leniency::Strict), FirstShown);
        assert_eq!(
            parse_json_choice(r#"{"choice": "Response (B)."}"#, Leniency::Lenient),
            SecondShown
        );
        assert_eq!(
            parse_json_choice(r#"{"choice": "Response (B)."}"#, Leniency::Strict),
            Invalid
        );
        assert_eq!(
            parse_json_choice(r#"{"verdict": "Response (A)"}"#, Leniency::Lenient),
            Invalid
        );
        assert_eq!(parse_json_choice("no json at all", Leniency::Lenient), Invalid);
        // Trailing comma as in the prompt's own format example.
        let trailing = "{\n \"choice\": \"Response (A)\",\n}";
        assert_eq!(parse_json_choice(trailing, Leniency::Lenient), FirstShown);
        assert_eq!(parse_json_choice(trailing, Leniency::Strict), Invalid);
    }

    #[test]
    fn model_identifier_is_case_sensitive() {
        assert_eq!(parse_model_identifier("Model (M)", Leniency::Strict), SecondShown);
        assert_eq!(parse_model_identifier("Model (m)", Leniency::Strict), FirstShown);
        assert_eq!(parse_model_identifier("m", Leniency::Lenient), FirstShown);
        assert_eq!(parse_model_identifier("m", Leniency::Strict), Invalid);
        assert_eq!(parse_model_identifier("M", Leniency::Lenient), SecondShown);
        assert_eq!(parse_model_identifier("Model (x)", Leniency::Lenient), Invalid);
        assert_eq!(
            parse_model_identifier("The best is Model (M).", Leniency::Lenient),
            SecondShown
        );
        assert_eq!(
            parse_model_identifier("Model (m) or Model (M)", Leniency::Lenient),
            Invalid
        );
    }

    fn flip(choice: LocalChoice) -> LocalChoice {
        match choice {
            FirstShown => SecondShown,
            SecondShown => FirstShown,
            Invalid => Invalid,
        }
    }

    fn swap_tokens(text: &str, pairs: &[(&str, &str)]) -> String {
        let mut out = text.to_string();
        for (i, (first, second)) in pairs.iter().enumerate() {
            let placeholder = format!("\u{1}{i}\u{2}");
            out = out
                .replace(first, &placeholder)
                .replace(second, first)
                .replace(&placeholder, second);
        }
        out
    }

    fn swap_ab(text: &str) -> String {
        swap_tokens(text, &[("(a)", "(b)"), ("(A)", "(B)")])
    }

    proptest! {
        #[test]
        fn label_swap_flips_result(
            prefix in "[ -~]{0,40}", middle in "[ -~]{0,40}", suffix in "[ -~]{0,40}",
            lenient in proptest::bool::ANY,
        ) {
            let leniency = if lenient { Leniency::Lenient } else { Leniency::Strict };
            let text = format!("{prefix}Output (a){middle}{suffix}");
            let swapped = swap_ab(&text);
            prop_assert_eq!(
                parse_label_only(&swapped, leniency),
                flip(parse_label_only(&text, leniency))
            );
            prop_assert_eq!(
                parse_verdict_sentence(&swapped, "Output", leniency),
                flip(parse_verdict_sentence(&text, "Output", leniency))
            );
        }

        #[test]
        fn model_identifier_swap_flips_result(noise in r"[\x20-\x7E--[mM]]{0,60}") {
            for candidate in [
                format!("Model (m) {noise}"),
                format!("{noise} Model (M)"),
                noise.clone(),
            ] {
                let swapped = swap_tokens(&candidate, &[("(m)", "(M)")]);
                prop_assert_eq!(
                    parse_model_identifier(&swapped, Leniency::Lenient),
                    flip(parse_model_identifier(&candidate, Leniency::Lenient))
                );
            }
        }

        #[test]
        fn parsers_are_total_and_idempotent(text in "\\PC{0,200}") {
            for kind in [
                ParserKind::LabelOnly,
                ParserKind::VerdictSentence,
                ParserKind::AnswerSentence,
                ParserKind::JsonChoice,
                ParserKind::ModelIdentifier,
            ] {
                let first = kind.parse(&text, Leniency::Lenient);
                prop_assert_eq!(first, kind.parse(&text, Leniency::Lenient));
                let strict = kind.parse(&text, Leniency::Strict);
                prop_assert_eq!(strict, kind.parse(&text, Leniency::Strict));
            }
        }
    }
}
