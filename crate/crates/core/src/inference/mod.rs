//! Per-question inference: classify, assemble, generate, execute.

mod classify;
mod executor;
mod generate;
mod pipeline;
mod record;

use thiserror::Error;

pub use classify::{classify_question, normalize_type_reply, resolve_type, Classification, CLASSIFY_TAG};
pub use executor::{
    ExecutionStatus, Executor, RecordedExecution, RecordedExecutor, SandboxRequest, SandboxResponse, SceneFixture,
    SceneObject, SceneRef, SubprocessExecutor, TraceEvent, UnavailableExecutor,
};
pub use generate::{generate_code, has_entry_point, GeneratedProgram, DEFAULT_ENTRY_POINT, GENERATE_TAG};
pub use pipeline::{
    assemble_preprompt, ExecutionResult, FailureKind, Mode, Pipeline, PipelineOptions, QaOutcome, Stage, StageFailure,
    DEFAULT_FALLBACK_TYPE,
};
pub use record::{load_dataset, parse_dataset, QaRecord};

use crate::compression::TemplateError;
use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("question type `{0}` is not in the compressed set")]
    UnknownType(String),
    #[error("no usable program after {attempts} attempt(s): {reason}")]
    CodeExtractionFailed { attempts: u32, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
