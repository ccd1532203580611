use pcomp_core::compression::{CatalogError, CompressionError};
use pcomp_core::eval::EvalError;
use pcomp_core::inference::InferenceError;
use pcomp_core::llm::LlmError;
use pcomp_core::preprompt::PrepromptError;
use pcomp_core::tokens::TokenizerError;

/// Errors grouped by the process exit code they map to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Backend(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
            CliError::Validation(m) => write!(f, "validation failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::TranscriptLoadFailed(_) => CliError::Config(e.to_string()),
            LlmError::InvalidRequest(_) | LlmError::ContextOverflow { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<CompressionError> for CliError {
    fn from(e: CompressionError) -> Self {
        match e {
            CompressionError::Llm(l) => l.into(),
            CompressionError::CompressionRejected { .. } | CompressionError::CorruptCache(_) => {
                CliError::Validation(e.to_string())
            }
            CompressionError::Template(_) | CompressionError::Io { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Llm(l) => l.into(),
            InferenceError::CodeExtractionFailed { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Inference(i) => i.into(),
            EvalError::EmptyDataset | EvalError::Config(_) | EvalError::Io { .. } => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PrepromptError> for CliError {
    fn from(e: PrepromptError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        CliError::Config(e.to_string())
    }
}
