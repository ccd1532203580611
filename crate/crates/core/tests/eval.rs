mod common;

use std::collections::BTreeMap;

use pcomp_core::compression::{CompressedPromptSet, QuestionTypeCatalog, Templates};
use pcomp_core::eval::{
    audit_log, confusion_matrix, run_eval, run_sweep, EvalError, EvalOptions, EvalRun, ErrorLabel, SampleSpec,
};
use pcomp_core::inference::{Mode, Pipeline, PipelineOptions, QaRecord, RecordedExecutor};
use pcomp_core::llm::LlmClient;
use pcomp_core::preprompt::{Aggregator, PrepromptSource};

const ADAPTIVE: &[&str] = &["gqa/transcripts/classify.jsonl", "gqa/transcripts/generate.jsonl"];
const ALL_WRONG: &[&str] = &["gqa/transcripts/classify_all_wrong.jsonl", "gqa/transcripts/generate.jsonl"];

struct Env {
    set: CompressedPromptSet,
    source: PrepromptSource,
    catalog: QuestionTypeCatalog,
    templates: Templates,
    executions: RecordedExecutor,
}

impl Env {
    fn new() -> Self {
        Self {
            set: common::compressed_set(),
            source: common::source(),
            catalog: common::catalog(),
            templates: Templates::builtin(),
            executions: RecordedExecutor::load(&common::fixture("gqa/executions.jsonl")).unwrap(),
        }
    }

    fn run(&self, transcripts: &[&str], mode: Mode, workers: usize, records: &[QaRecord]) -> Result<EvalRun, EvalError> {
        let client: LlmClient = common::client(transcripts);
        let pipeline = Pipeline::new(
            &self.set,
            &self.source,
            &self.catalog,
            &self.templates,
            &client,
            &self.executions,
            Aggregator::default(),
            PipelineOptions {
                seed: Some(7),
                scene_dir: Some(common::fixture("gqa/scenes")),
                ..PipelineOptions::default()
            },
        )
        .unwrap();
        run_eval(&pipeline, records, &EvalOptions { mode, workers, sample: None })
    }
}

#[test]
fn worker_count_does_not_change_the_report() {
    let env = Env::new();
    let data = common::dataset();
    let one = env.run(ADAPTIVE, Mode::Adaptive, 1, &data).unwrap();
    let four = env.run(ADAPTIVE, Mode::Adaptive, 4, &data).unwrap();
    assert_eq!(one.report.to_json(), four.report.to_json());
    assert_eq!(one.log_jsonl(), four.log_jsonl());
    let ids: Vec<&str> = four.logs.iter().map(|l| l.outcome.id.as_str()).collect();
    let expected: Vec<&str> = data.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, expected);
}

#[test]
fn adaptive_report_figures() {
    let env = Env::new();
    let run = env.run(ADAPTIVE, Mode::Adaptive, 2, &common::dataset()).unwrap();
    let r = &run.report;
    assert_eq!(r.n, 20);
    assert_eq!(r.correct, 15);
    assert_eq!(r.accuracy, 75.0);
    assert_eq!(r.llm_calls, 40);
    assert_eq!(r.fallbacks, 1);
    assert_eq!(r.classification_accuracy, Some(85.0));
    assert_eq!(r.confusion.as_ref().unwrap().diagonal(), 17);
    assert_eq!(r.errors["coding error"], 1);
    assert_eq!(r.errors["cannot answer to simple query"], 1);
    assert_eq!(r.errors.len(), ErrorLabel::ALL.len());
    assert!(r.reduction_rate.unwrap() > 65.0);
    assert_eq!(r.backend_failures(), 0);
}

#[test]
fn log_audit_reproduces_the_report() {
    let env = Env::new();
    for mode in [Mode::Adaptive, Mode::NoCompression, Mode::RandomType] {
        let run = env.run(ADAPTIVE, mode.clone(), 3, &common::dataset()).unwrap();
        let audited = audit_log(&run.log_jsonl()).unwrap();
        assert_eq!(audited, run.report, "{mode}");
    }
}

#[test]
fn tampered_log_no_longer_matches() {
    let env = Env::new();
    let run = env.run(ADAPTIVE, Mode::Adaptive, 1, &common::dataset()).unwrap();
    let log = run.log_jsonl().replacen("\"correct\":true", "\"correct\":false", 1);
    let audited = audit_log(&log).unwrap();
    assert_ne!(audited.correct, run.report.correct);
}

#[test]
fn ablation_ordering_holds() {
    let env = Env::new();
    let data = common::dataset();
    let oracle = env.run(ADAPTIVE, Mode::OracleType, 2, &data).unwrap().report.accuracy;
    let adaptive = env.run(ADAPTIVE, Mode::Adaptive, 2, &data).unwrap().report.accuracy;
    let wrong = env.run(ALL_WRONG, Mode::Adaptive, 2, &data).unwrap().report;
    assert!(oracle >= adaptive && adaptive >= wrong.accuracy, "{oracle} {adaptive} {}", wrong.accuracy);
    assert_eq!(wrong.classification_accuracy, Some(0.0));
}

#[test]
fn taxonomy_labels_on_off_type_programs() {
    let env = Env::new();
    let run = env.run(ALL_WRONG, Mode::Adaptive, 2, &common::dataset()).unwrap();
    let labels: BTreeMap<&str, ErrorLabel> = run.logs.iter().map(|l| (l.outcome.id.as_str(), l.label)).collect();
    assert_eq!(labels["r01"], ErrorLabel::NoObjectDetected);
    assert_eq!(labels["r06"], ErrorLabel::Paraphrasing);
    assert_eq!(labels["r07"], ErrorLabel::WrongAnswer);
    assert_eq!(labels["r09"], ErrorLabel::Articles);
    assert_eq!(labels["r11"], ErrorLabel::UnnecessaryDetails);
    assert_eq!(labels["r14"], ErrorLabel::Articles);
    assert_eq!(labels["r18"], ErrorLabel::WrongAnswer);
    assert_eq!(labels["r20"], ErrorLabel::WrongAnswer);
    let total: usize = run.report.errors.values().sum();
    assert_eq!(total, 20);
}

#[test]
fn sweep_covers_every_mode() {
    let env = Env::new();
    let client = common::client(ADAPTIVE);
    let pipeline = Pipeline::new(
        &env.set,
        &env.source,
        &env.catalog,
        &env.templates,
        &client,
        &env.executions,
        Aggregator::default(),
        PipelineOptions { seed: Some(7), ..PipelineOptions::default() },
    )
    .unwrap();
    let modes = Mode::sweep(&env.catalog);
    assert_eq!(modes.len(), 10);
    let results = run_sweep(&pipeline, &common::dataset(), &modes, 4, None);
    for (mode, r) in &results {
        let r = r.as_ref().unwrap();
        assert_eq!(r.report.mode, *mode);
        assert_eq!(r.report.n, 20);
    }
    let baseline = &results[0].1.as_ref().unwrap().report;
    let adaptive = &results[2].1.as_ref().unwrap().report;
    assert_eq!(baseline.mode, Mode::NoCompression);
    assert!(adaptive.mean_input_tokens < baseline.mean_input_tokens / 3.0);
}

#[test]
fn empty_dataset_and_missing_gold_types_are_errors() {
    let env = Env::new();
    assert!(matches!(env.run(ADAPTIVE, Mode::Adaptive, 1, &[]), Err(EvalError::EmptyDataset)));
    let mut data = common::dataset();
    data[3].gold_type = None;
    assert!(env.run(ADAPTIVE, Mode::OracleType, 1, &data).is_err());
    let run = env.run(ADAPTIVE, Mode::Adaptive, 1, &data).unwrap();
    assert!(run.report.confusion.is_none());
    assert!(run.report.classification_accuracy.is_none());
}

#[test]
fn sampling_is_seeded() {
    let env = Env::new();
    let client = common::client(ADAPTIVE);
    let pipeline = Pipeline::new(
        &env.set,
        &env.source,
        &env.catalog,
        &env.templates,
        &client,
        &env.executions,
        Aggregator::default(),
        PipelineOptions::default(),
    )
    .unwrap();
    let opts = EvalOptions { mode: Mode::OracleType, workers: 2, sample: Some(SampleSpec { size: 8, seed: 3 }) };
    let a = run_eval(&pipeline, &common::dataset(), &opts).unwrap();
    let b = run_eval(&pipeline, &common::dataset(), &opts).unwrap();
    assert_eq!(a.report.n, 8);
    assert_eq!(a.report.sample.as_ref().unwrap().population, 20);
    assert_eq!(a.log_jsonl(), b.log_jsonl());
}

#[test]
fn confusion_fixture_reports_58_1() {
    #[derive(serde::Deserialize)]
    struct Fixture {
        labels: Vec<String>,
        pairs: Vec<(String, String)>,
    }
    let f: Fixture = serde_json::from_str(&common::read("eval/confusion_58_1.json")).unwrap();
    let m = confusion_matrix(&f.labels, f.pairs.iter().map(|(g, p)| (Some(g.as_str()), Some(p.as_str())))).unwrap();
    assert_eq!(m.total(), 1000);
    assert_eq!(m.diagonal(), 581);
    assert_eq!(pcomp_core::eval::round1(m.accuracy()), 58.1);
    for g in 0..f.labels.len() {
        assert_eq!(m.row_sum(g), 200);
    }
}
