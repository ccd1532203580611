use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::exact_match;
use super::report::{aggregate, render_log, ReportHeader, RecordLog, RunProvenance, SampleInfo};
use super::taxonomy::classify_error;
use super::{EvalError, EvalReport};
use crate::inference::{Mode, Pipeline, QaRecord};
use crate::pool::map_ordered;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSpec {
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub mode: Mode,
    pub workers: usize,
    pub sample: Option<SampleSpec>,
}

/// A finished run: the report plus the log it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub header: ReportHeader,
    pub logs: Vec<RecordLog>,
    pub report: EvalReport,
}

impl EvalRun {
    pub fn log_jsonl(&self) -> String {
        render_log(&self.header, &self.logs)
    }

    /// Writes `<stem>.json`, `<stem>.txt` and `<stem>.records.jsonl`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        let io = |path: &Path, e: std::io::Error| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (suffix, body) in [
            ("json", self.report.to_json()),
            ("txt", self.report.render_text()),
            ("records.jsonl", self.log_jsonl()),
        ] {
            let path = dir.join(format!("{stem}.{suffix}"));
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// Seeded subsample without replacement, kept in dataset order.
pub fn subsample(records: &[QaRecord], spec: &SampleSpec) -> Vec<QaRecord> {
    if spec.size >= records.len() {
        return records.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = rand::seq::index::sample(&mut rng, records.len(), spec.size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| records[i].clone()).collect()
}

fn provenance(pipeline: &Pipeline<'_>) -> RunProvenance {
    let set = pipeline.set();
    RunProvenance {
        backend_id: pipeline.client().backend_id().to_string(),
        tokenizer: pipeline.client().tokenizer().id().to_string(),
        template_version: pipeline.template_version().to_string(),
        executor: pipeline.executor_id().to_string(),
        set_backend_id: set.provenance.backend_id.clone(),
        set_checksum: crate::llm::prompt_hash(&set.to_json()),
    }
}

/// Answers every record in `options.mode` and aggregates the results.
/// Only configuration problems abort the run.
pub fn run_eval(pipeline: &Pipeline<'_>, records: &[QaRecord], options: &EvalOptions) -> Result<EvalRun, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    pipeline.validate_mode(&options.mode)?;
    if options.mode == Mode::OracleType {
        if let Some(r) = records.iter().find(|r| r.gold_type.is_none()) {
            return Err(EvalError::Config(format!("oracle_type mode: record `{}` has no gold type", r.id)));
        }
    }
    let selected = match &options.sample {
        Some(spec) => subsample(records, spec),
        None => records.to_vec(),
    };
    let outcomes = map_ordered(&selected, options.workers, |_, r| pipeline.answer_question(r, &options.mode));
    let logs: Vec<RecordLog> = selected
        .iter()
        .zip(outcomes)
        .map(|(record, outcome)| {
            let answer = outcome.result.answer.as_deref();
            RecordLog {
                question: record.question.clone(),
                gold_answer: record.gold_answer.clone(),
                gold_type: record.gold_type.clone(),
                correct: answer.is_some_and(|a| exact_match(a, &record.gold_answer)),
                label: classify_error(&record.gold_answer, &outcome.result),
                baseline_tokens: pipeline.token_budget(&record.question, &Mode::NoCompression, None).total,
                outcome,
            }
        })
        .collect();
    let header = ReportHeader {
        mode: options.mode.clone(),
        seed: pipeline.options().seed,
        sample: options.sample.as_ref().map(|s| SampleInfo {
            size: selected.len(),
            seed: s.seed,
            population: records.len(),
        }),
        type_names: pipeline.catalog().names().map(str::to_string).collect(),
        baseline: Mode::NoCompression.to_string(),
        provenance: provenance(pipeline),
    };
    let report = aggregate(&header, &logs)?;
    Ok(EvalRun { header, logs, report })
}

/// Runs each mode in turn; modes the configuration cannot support are
/// returned as errors rather than aborting the sweep.
pub fn run_sweep(
    pipeline: &Pipeline<'_>,
    records: &[QaRecord],
    modes: &[Mode],
    workers: usize,
    sample: Option<SampleSpec>,
) -> Vec<(Mode, Result<EvalRun, EvalError>)> {
    modes
        .iter()
        .map(|m| {
            let options = EvalOptions {
                mode: m.clone(),
                workers,
                sample: sample.clone(),
            };
            (m.clone(), run_eval(pipeline, records, &options))
        })
        .collect()
}
