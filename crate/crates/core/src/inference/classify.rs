//! Question-type classification.

use serde::{Deserialize, Serialize};

use crate::compression::QuestionTypeCatalog;
use crate::llm::{LlmClient, LlmError, LlmRequest, DEFAULT_CLASSIFICATION_MAX_TOKENS};

pub const CLASSIFY_TAG: &str = "classify";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub type_name: String,
    /// The reply named no catalog type and the fallback was used instead.
    pub fallback: bool,
    pub raw_reply: String,
    pub output_tokens: usize,
}

fn normalize(text: &str) -> String {
    let lowered = text.trim().to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !(c.is_ascii_punctuation() && *c != '_' && *c != '-') && !is_unicode_punct(*c))
        .collect();
    stripped.split_whitespace().next().unwrap_or("").to_string()
}

fn is_unicode_punct(c: char) -> bool {
    !c.is_ascii() && matches!(c, '\u{2010}'..='\u{2027}' | '\u{3001}'..='\u{3003}' | '\u{ff01}'..='\u{ff0f}' | '«' | '»' | '¡' | '¿')
}

/// Maps a raw model reply to a catalog type name, or `None` when the first
/// normalized token names no type.
pub fn normalize_type_reply(reply: &str, catalog: &QuestionTypeCatalog) -> Option<String> {
    let token = normalize(reply);
    if token.is_empty() {
        return None;
    }
    catalog.names().find(|name| normalize(name) == token).map(str::to_string)
}

/// Total over every possible reply: the result is always a catalog name.
pub fn resolve_type(reply: &str, catalog: &QuestionTypeCatalog, fallback: &str) -> (String, bool) {
    match normalize_type_reply(reply, catalog) {
        Some(name) => (name, false),
        None => (fallback.to_string(), true),
    }
}

/// Sends the rendered classification prompt followed by the question.
pub fn classify_question(
    question: &str,
    classification_prompt: &str,
    catalog: &QuestionTypeCatalog,
    client: &LlmClient,
    fallback: &str,
) -> Result<Classification, LlmError> {
    let request = LlmRequest::new(crate::concat_prompt(classification_prompt, question), CLASSIFY_TAG)
        .with_max_output_tokens(DEFAULT_CLASSIFICATION_MAX_TOKENS);
    let reply = client.complete(&request)?;
    let (type_name, fallback) = resolve_type(&reply.text, catalog, fallback);
    if fallback {
        tracing::warn!(reply = %reply.text.trim(), "classification reply names no catalog type; using fallback");
    }
    Ok(Classification {
        type_name,
        fallback,
        raw_reply: reply.text,
        output_tokens: reply.output_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> QuestionTypeCatalog {
        QuestionTypeCatalog::from_pairs([("obj", "o"), ("attr", "a"), ("global", "g")]).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let c = catalog();
        assert_eq!(normalize_type_reply(" Attr.\n", &c).as_deref(), Some("attr"));
        assert_eq!(normalize_type_reply("\"global\" because ...", &c).as_deref(), Some("global"));
        assert_eq!(normalize_type_reply("banana", &c), None);
        assert_eq!(normalize_type_reply("", &c), None);
        assert_eq!(resolve_type("banana", &c, "attr"), ("attr".to_string(), true));
    }
}
