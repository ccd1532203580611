//! Question-type adaptive compression of code-generation preprompts.
//!
//! The crate is organised around the two phases of the pipeline:
//!
//! - [`compression`] runs once. It asks the LLM to rewrite the API
//!   definitions and to write a small snippet bundle for each question type,
//!   then validates and persists the result as a [`CompressedPromptSet`].
//! - [`inference`] runs per question. It classifies the question, splices the
//!   matching bundle into the compressed definitions, asks the LLM for a
//!   program and hands that program to an [`Executor`].
//!
//! [`preprompt`] holds the definition parser, the structural aggregation used
//! by both phases and token accounting. [`llm`] abstracts the single frozen
//! model behind live HTTP dialects and a replay transcript. [`eval`] computes
//! accuracy, reduction rates, confusion matrices and the error taxonomy.
//!
//! [`CompressedPromptSet`]: compression::CompressedPromptSet
//! [`Executor`]: inference::Executor

pub mod compression;
pub mod eval;
pub mod inference;
pub mod llm;
pub mod pool;
pub mod preprompt;
pub mod tokens;

pub use compression::{CompressedPromptSet, QuestionTypeCatalog};
pub use llm::{Backend, LlmClient, LlmRequest, LlmResponse};
pub use preprompt::{ApiDefinitionIndex, PrepromptSource, SnippetBundle, TokenBudget};
pub use inference::{Mode, QaRecord};
pub use tokens::Tokenizer;

/// Textual concatenation used for every `prompt + suffix` sent to the model.
///
/// A newline is inserted only when the left side does not already end in
/// whitespace, so a question never fuses with the last word of a preprompt.
pub fn concat_prompt(head: &str, tail: &str) -> String {
    if head.is_empty() || head.ends_with(char::is_whitespace) {
        format!("{head}{tail}")
    } else {
        format!("{head}\n{tail}")
    }
}
