//! One-time compression of the preprompt into a per-question-type set.

mod catalog;
mod extract;
mod phase;
mod set;
mod templates;

use thiserror::Error;

pub use catalog::{CatalogError, QuestionType, QuestionTypeCatalog};
pub use extract::{extract_all_code, extract_code, fenced_blocks, split_snippets};
pub use phase::{
    public_names, CompressedDefinitions, CompressionOptions, Compressor, GENERIC_BUNDLE, IMAGE_PATCH_API_NAMES,
};
pub use set::{load_set, parse_set, save_set, CompressedPromptSet, LoadedSet, PartTokens, Provenance, FORMAT_VERSION};
pub use templates::{TemplateError, TemplatePaths, Templates, BUILTIN_VERSION, TYPE_DEFINITION};

use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error("{part} compression rejected after {attempts} attempt(s): {reason}")]
    CompressionRejected { part: String, attempts: u32, reason: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("corrupt compressed set: {0}")]
    CorruptCache(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
