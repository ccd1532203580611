//! Metrics, reports and ablation sweeps.

mod harness;
mod metrics;
mod report;
mod taxonomy;

use thiserror::Error;

pub use harness::{run_eval, run_sweep, subsample, EvalOptions, EvalRun, SampleSpec};
pub use metrics::{confusion_matrix, exact_match, reduction_rate, round1, ConfusionMatrix};
pub use report::{
    aggregate, audit_log, parse_log, render_log, render_sweep, EvalReport, MeanBudget, RecordLog, ReportHeader,
    RunProvenance, SampleInfo,
};
pub use taxonomy::{classify_error, ErrorLabel, CANNOT_ANSWER_SENTINEL};

use crate::inference::InferenceError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reduction rate needs a positive baseline")]
    DivisionByZero,
    #[error("record {index} has no gold type")]
    MissingGoldTypes { index: usize },
    #[error("`{0}` is not a confusion-matrix label")]
    UnknownLabel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("per-record log: {0}")]
    BadLog(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
