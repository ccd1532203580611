use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, reduction_rate, round1, ConfusionMatrix};
use super::taxonomy::ErrorLabel;
use super::EvalError;
use crate::inference::{Mode, QaOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub size: usize,
    pub seed: u64,
    pub population: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub backend_id: String,
    pub tokenizer: String,
    pub template_version: String,
    pub executor: String,
    /// Backend that produced the compressed set.
    pub set_backend_id: String,
    pub set_checksum: String,
}

/// Run-level facts recorded at the top of the per-record log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleInfo>,
    /// Catalog order, used as the confusion-matrix axes.
    pub type_names: Vec<String>,
    pub baseline: String,
    pub provenance: RunProvenance,
}

/// One line of the per-record log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLog {
    pub question: String,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<String>,
    pub correct: bool,
    pub label: ErrorLabel,
    /// Analytic input tokens of the uncompressed preprompt for this question.
    pub baseline_tokens: usize,
    #[serde(flatten)]
    pub outcome: QaOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBudget {
    pub api_defs: f64,
    pub instruction: f64,
    pub classification: f64,
    pub snippets: f64,
    pub question: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleInfo>,
    pub n: usize,
    pub correct: usize,
    /// Exact-match accuracy, percent.
    pub accuracy: f64,
    pub mean_input_tokens: f64,
    /// Mean output tokens of the generation call.
    pub mean_output_tokens: f64,
    pub mean_budget: MeanBudget,
    pub baseline: String,
    pub baseline_mean_input_tokens: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_accuracy: Option<f64>,
    pub fallbacks: usize,
    pub llm_calls: usize,
    pub errors: BTreeMap<String, usize>,
    /// Labels in `errors` that come from near-miss heuristics.
    pub heuristic_labels: Vec<String>,
    /// `<stage>/<kind>` → count of records that failed before execution.
    pub stage_failures: BTreeMap<String, usize>,
    pub provenance: RunProvenance,
}

impl EvalReport {
    pub fn backend_failures(&self) -> usize {
        self.stage_failures
            .iter()
            .filter(|(k, _)| k.ends_with("/backend"))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode                  {}", self.mode);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed                  {seed}");
        }
        if let Some(s) = &self.sample {
            let _ = writeln!(out, "sample                {} of {} (seed {})", s.size, s.population, s.seed);
        }
        let _ = writeln!(out, "records               {}", self.n);
        let _ = writeln!(out, "accuracy              {:.1}% ({}/{})", self.accuracy, self.correct, self.n);
        let _ = writeln!(out, "mean input tokens     {:.1}", self.mean_input_tokens);
        let _ = writeln!(out, "mean output tokens    {:.1}", self.mean_output_tokens);
        let _ = writeln!(out, "{} tokens  {:.1}", self.baseline, self.baseline_mean_input_tokens);
        if let Some(r) = self.reduction_rate {
            let _ = writeln!(out, "reduction rate        {r:.1}%");
        }
        let _ = writeln!(out, "llm calls             {}", self.llm_calls);
        let _ = writeln!(out, "fallbacks             {}", self.fallbacks);
        out.push_str("\nmean budget\n");
        let b = &self.mean_budget;
        for (name, v) in [
            ("api definitions", b.api_defs),
            ("instruction", b.instruction),
            ("classification", b.classification),
            ("snippets", b.snippets),
            ("question", b.question),
            ("total", b.total),
        ] {
            let _ = writeln!(out, "  {name:<18}{v:>10.1}");
        }
        out.push_str("\nerrors\n");
        for (label, count) in &self.errors {
            let mark = if self.heuristic_labels.contains(label) { " *" } else { "" };
            let _ = writeln!(out, "  {:<38}{:>6}{mark}", label, count);
        }
        out.push_str("  (* heuristic)\n");
        if !self.stage_failures.is_empty() {
            out.push_str("\nstage failures\n");
            for (k, v) in &self.stage_failures {
                let _ = writeln!(out, "  {k:<38}{v:>6}");
            }
        }
        if let Some(m) = &self.confusion {
            out.push_str("\nconfusion (rows gold, columns predicted)\n");
            let width = m.labels.iter().map(|l| l.len()).max().unwrap_or(4).max(5) + 2;
            let _ = write!(out, "  {:width$}", "");
            for l in &m.labels {
                let _ = write!(out, "{l:>width$}");
            }
            out.push('\n');
            for (g, row) in m.counts.iter().enumerate() {
                let _ = write!(out, "  {:width$}", m.labels[g]);
                for c in row {
                    let _ = write!(out, "{c:>width$}");
                }
                out.push('\n');
            }
            if let Some(acc) = self.classification_accuracy {
                let _ = writeln!(out, "  classification accuracy {acc:.1}%");
            }
        }
        out
    }
}

fn mean(values: impl Iterator<Item = usize>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.sum::<usize>() as f64 / n as f64
}

/// Every aggregate of the report, computed from the header and the log
/// alone.
pub fn aggregate(header: &ReportHeader, logs: &[RecordLog]) -> Result<EvalReport, EvalError> {
    let n = logs.len();
    if n == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let correct = logs.iter().filter(|l| l.correct).count();
    let budgets = || logs.iter().map(|l| &l.outcome.budget);
    let mean_budget = MeanBudget {
        api_defs: mean(budgets().map(|b| b.api_defs_tokens), n),
        instruction: mean(budgets().map(|b| b.instruction_tokens), n),
        classification: mean(budgets().map(|b| b.classification_tokens), n),
        snippets: mean(budgets().map(|b| b.snippet_tokens), n),
        question: mean(budgets().map(|b| b.question_tokens), n),
        total: mean(budgets().map(|b| b.total), n),
    };
    let baseline_mean = mean(logs.iter().map(|l| l.baseline_tokens), n);
    let reduction = reduction_rate(baseline_mean, mean_budget.total).ok();

    let mut errors: BTreeMap<String, usize> = ErrorLabel::ALL.iter().map(|l| (l.to_string(), 0)).collect();
    for l in logs {
        *errors.get_mut(l.label.as_str()).expect("all labels present") += 1;
    }
    let heuristic_labels = ErrorLabel::ALL
        .iter()
        .filter(|l| l.is_heuristic())
        .map(|l| l.to_string())
        .collect();

    let mut stage_failures = BTreeMap::new();
    for l in logs {
        if let Some(f) = &l.outcome.result.failure {
            let key = format!(
                "{}/{}",
                serde_json::to_value(f.stage).expect("stage serializes").as_str().unwrap_or("?"),
                serde_json::to_value(f.kind).expect("kind serializes").as_str().unwrap_or("?")
            );
            *stage_failures.entry(key).or_insert(0) += 1;
        }
    }

    let confusion = if header.mode.classifies() && logs.iter().all(|l| l.gold_type.is_some()) {
        Some(confusion_matrix(
            &header.type_names,
            logs.iter()
                .map(|l| (l.gold_type.as_deref(), l.outcome.predicted_type.as_deref())),
        )?)
    } else {
        None
    };
    let classification_accuracy = confusion.as_ref().map(|m| m.accuracy());

    Ok(EvalReport {
        mode: header.mode.clone(),
        seed: header.seed,
        sample: header.sample.clone(),
        n,
        correct,
        accuracy: correct as f64 / n as f64 * 100.0,
        mean_input_tokens: mean_budget.total,
        mean_output_tokens: mean(logs.iter().map(|l| l.outcome.generation_output_tokens), n),
        mean_budget,
        baseline: header.baseline.clone(),
        baseline_mean_input_tokens: baseline_mean,
        reduction_rate: reduction,
        confusion,
        classification_accuracy,
        fallbacks: logs.iter().filter(|l| l.outcome.fallback).count(),
        llm_calls: logs.iter().map(|l| l.outcome.llm_calls).sum(),
        errors,
        heuristic_labels,
        stage_failures,
        provenance: header.provenance.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header(ReportHeader),
    Record(Box<RecordLog>),
}

/// Header line followed by one line per record.
pub fn render_log(header: &ReportHeader, logs: &[RecordLog]) -> String {
    let mut out = serde_json::to_string(&LogLine::Header(header.clone())).expect("header serializes");
    out.push('\n');
    for l in logs {
        out.push_str(&serde_json::to_string(&LogLine::Record(Box::new(l.clone()))).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<(ReportHeader, Vec<RecordLog>), EvalError> {
    let mut header = None;
    let mut logs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(line).map_err(|e| EvalError::BadLog(format!("line {}: {e}", i + 1)))? {
            LogLine::Header(h) if header.is_none() => header = Some(h),
            LogLine::Header(_) => return Err(EvalError::BadLog(format!("line {}: second header", i + 1))),
            LogLine::Record(r) => logs.push(*r),
        }
    }
    let header = header.ok_or_else(|| EvalError::BadLog("missing header line".into()))?;
    Ok((header, logs))
}

/// Recomputes the report from a per-record log.
pub fn audit_log(text: &str) -> Result<EvalReport, EvalError> {
    let (header, logs) = parse_log(text)?;
    aggregate(&header, &logs)
}

/// Side-by-side summary of several runs over the same records.
pub fn render_sweep(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24}{:>6}{:>10}{:>12}{:>11}{:>10}",
        "mode", "n", "accuracy", "input tok", "reduction", "cls acc"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<24}{:>6}{:>10.1}{:>12.1}{:>11}{:>10}",
            r.mode.to_string(),
            r.n,
            r.accuracy,
            r.mean_input_tokens,
            r.reduction_rate.map(|x| format!("{:.1}", round1(x))).unwrap_or_else(|| "-".into()),
            r.classification_accuracy
                .map(|x| format!("{x:.1}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    out
}
