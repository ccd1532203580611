use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::compression::extract_code;
use crate::llm::{LlmClient, LlmRequest};
use crate::preprompt::TokenBudget;

pub const GENERATE_TAG: &str = "generate";
pub const DEFAULT_ENTRY_POINT: &str = "execute_command";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedProgram {
    pub code: String,
    pub entry_point: String,
    /// Filled in by the pipeline once the budget for the question is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_budget: Option<TokenBudget>,
    pub attempts: u32,
    pub output_tokens: usize,
}

static DEF_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:async[ \t]+)?def[ \t]+([A-Za-z_][A-Za-z0-9_]*)[ \t]*\(").unwrap());

pub fn has_entry_point(code: &str, entry_point: &str) -> bool {
    DEF_HEADER.captures_iter(code).any(|c| &c[1] == entry_point)
}

/// Asks for a program and keeps the code block, re-asking with the problem
/// appended while the entry point is missing.
pub fn generate_code(
    preprompt: &str,
    question: &str,
    client: &LlmClient,
    entry_point: &str,
    max_attempts: u32,
    max_output_tokens: usize,
) -> Result<GeneratedProgram, InferenceError> {
    let prompt = crate::concat_prompt(preprompt, question);
    let attempts = max_attempts.max(1);
    let mut current = prompt.clone();
    let mut output_tokens = 0;
    let mut reason = String::new();
    for attempt in 1..=attempts {
        let request = LlmRequest::new(current.clone(), GENERATE_TAG).with_max_output_tokens(max_output_tokens);
        let reply = client.complete(&request)?;
        output_tokens += reply.output_tokens;
        let code = extract_code(&reply.text);
        if has_entry_point(&code, entry_point) {
            return Ok(GeneratedProgram {
                code,
                entry_point: entry_point.to_string(),
                source_budget: None,
                attempts: attempt,
                output_tokens,
            });
        }
        reason = format!("the reply does not define `{entry_point}`");
        tracing::warn!(attempt, %reason, "generated program rejected");
        current = crate::concat_prompt(
            &prompt,
            &format!("\nYour previous answer was rejected: {reason}. Reply with a complete `def {entry_point}(image):` function."),
        );
    }
    Err(InferenceError::CodeExtractionFailed { attempts, reason })
}
