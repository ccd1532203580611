//! Library half of the `pcomp` command: configuration, wiring and the
//! subcommands, kept here so tests can drive them in-process.

pub mod config;
pub mod error;
pub mod table;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pcomp_core::compression::{CompressedPromptSet, CompressionOptions, Compressor, QuestionTypeCatalog, Templates};
use pcomp_core::eval::{audit_log, render_sweep, run_eval, run_sweep, EvalOptions, EvalRun, SampleSpec};
use pcomp_core::inference::{
    classify_question, load_dataset, parse_dataset, Executor, Mode, Pipeline, PipelineOptions, QaRecord,
    RecordedExecutor, SubprocessExecutor, UnavailableExecutor,
};
use pcomp_core::llm::{Backend, Completion, HttpBackend, HttpConfig, LlmClient, LlmError, LlmRequest};
use pcomp_core::llm::{RecordingBackend, ReplayBackend};
use pcomp_core::pool::map_ordered;
use pcomp_core::preprompt::{Aggregator, PrepromptSource};
use pcomp_core::tokens::{Tokenizer, TokenizerSpec};

pub use config::RunConfig;
pub use error::CliError;
use table::{TableInput, TokenTable};

#[derive(Debug, Parser)]
#[command(name = "pcomp", version, about = "Question-type adaptive preprompt compression")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "pcomp.toml")]
    pub config: PathBuf,
    /// Serve every model call from this replay transcript; no network access.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    /// Call the live backend and append new exchanges to this transcript.
    #[arg(long, global = true, conflicts_with = "transcript")]
    pub record: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save the compressed prompt set, then print its token table.
    Compress {
        /// Where to write the set; defaults to `paths.compressed_set`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the predicted question type for each question.
    Classify {
        question: Option<String>,
        /// One question per line, or a dataset in JSON-lines form.
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Answer one question or a dataset.
    Infer(InferArgs),
    /// Evaluate a dataset and write the report files.
    Eval(EvalArgs),
    /// Count tokens of files with the configured tokenizer.
    Tokens {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Use the whitespace and punctuation tokenizer instead.
        #[arg(long)]
        whitespace: bool,
    },
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, conflicts_with = "dataset")]
    pub question: Option<String>,
    #[arg(long, default_value = "")]
    pub scene: String,
    /// Type used by oracle mode, and by a dry run in place of classification.
    #[arg(long = "type")]
    pub type_name: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    /// Print the assembled preprompt and budget without any backend call.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    /// Run every ablation mode in turn.
    #[arg(long)]
    pub sweep: bool,
    /// Output directory; defaults to `paths.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Stands in for the model when a command must not reach any backend.
struct OfflineBackend;

impl Backend for OfflineBackend {
    fn id(&self) -> &str {
        "offline"
    }

    fn complete(&self, _request: &LlmRequest) -> Result<Completion, LlmError> {
        Err(LlmError::BackendUnreachable {
            attempts: 0,
            last_error: "backend calls are disabled for this command".into(),
        })
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    RunConfig::load(&cli.config).map_err(CliError::Config)
}

fn tokenizer(config: &RunConfig) -> Result<Tokenizer, CliError> {
    Ok(Tokenizer::load(&config.tokenizer)?)
}

fn templates(config: &RunConfig) -> Result<Templates, CliError> {
    match &config.templates {
        Some(paths) => Templates::load(paths).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(Templates::builtin()),
    }
}

fn backend(cli: &Cli, config: &RunConfig) -> Result<Arc<dyn Backend>, CliError> {
    let transcript = cli.transcript.clone().or_else(|| {
        if cli.record.is_none() {
            config.paths.transcript.clone()
        } else {
            None
        }
    });
    if let Some(path) = transcript {
        return Ok(Arc::new(ReplayBackend::load(&path)?));
    }
    let b = config
        .backend
        .as_ref()
        .ok_or_else(|| CliError::Config("no [backend] section and no transcript given".into()))?;
    let key = std::env::var(&b.api_key_env)
        .map_err(|_| CliError::Config(format!("environment variable {} is not set", b.api_key_env)))?;
    let mut http = HttpConfig::new(b.dialect, &b.base_url, &b.model);
    http.api_key = Some(key);
    http.max_attempts = b.max_attempts;
    http.timeout_ms = b.timeout_ms;
    http.requests_per_minute = b.requests_per_minute;
    let live: Arc<dyn Backend> = Arc::new(HttpBackend::new(http)?);
    match &cli.record {
        Some(path) => Ok(Arc::new(RecordingBackend::new(live, path)?)),
        None => Ok(live),
    }
}

fn client(backend: Arc<dyn Backend>, tokenizer: Tokenizer, config: &RunConfig) -> LlmClient {
    let client = LlmClient::new(backend, tokenizer);
    match config.backend.as_ref().and_then(|b| b.context_window) {
        Some(w) => client.with_context_window(w),
        None => client,
    }
}

fn executor(config: &RunConfig) -> Result<Box<dyn Executor>, CliError> {
    if let Some(path) = &config.paths.executions {
        return Ok(Box::new(RecordedExecutor::load(path).map_err(CliError::Config)?));
    }
    match &config.sandbox.command {
        Some(cmd) if !cmd.is_empty() => {
            let mut cmd = cmd.clone();
            if let Some(dir) = &config.paths.scene_dir {
                cmd.push("--scene-dir".into());
                cmd.push(dir.display().to_string());
            }
            Ok(Box::new(SubprocessExecutor::new(cmd)))
        }
        _ => Ok(Box::new(UnavailableExecutor)),
    }
}

fn source(config: &RunConfig) -> Result<PrepromptSource, CliError> {
    let p = &config.preprompt;
    Ok(PrepromptSource::load(&p.definitions, &p.snippets, &p.instruction)?)
}

fn aggregator(config: &RunConfig) -> Aggregator {
    Aggregator::new(config.preprompt.comment_prefix.clone())
}

fn load_set(config: &RunConfig, tokenizer: &Tokenizer) -> Result<CompressedPromptSet, CliError> {
    let loaded = CompressedPromptSet::load(&config.paths.compressed_set, tokenizer.id())?;
    if loaded.tokenizer_mismatch {
        eprintln!(
            "warning: {} was counted with tokenizer `{}`, current tokenizer is `{}`",
            config.paths.compressed_set.display(),
            loaded.set.provenance.tokenizer,
            tokenizer.id()
        );
    }
    Ok(loaded.set)
}

fn pipeline_options(config: &RunConfig, execute: bool) -> PipelineOptions {
    let mut o = PipelineOptions {
        fallback_type: config.run.fallback_type.clone(),
        entry_point: config.preprompt.entry_point.clone(),
        seed: config.run.seed,
        max_attempts: config.run.max_attempts,
        time_limit_ms: config.sandbox.time_limit_ms,
        memory_limit_mb: config.sandbox.memory_limit_mb,
        execute: execute && config.sandbox.execute,
        scene_dir: config.paths.scene_dir.clone(),
        ..PipelineOptions::default()
    };
    if let Some(n) = config.run.max_output_tokens {
        o.max_output_tokens = n;
    }
    o
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write output: {e}"))
}

/// Runs a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Compress { out: target } => cmd_compress(cli, target.as_deref(), out),
        Command::Classify { question, batch } => cmd_classify(cli, question.as_deref(), batch.as_deref(), out),
        Command::Infer(args) => cmd_infer(cli, args, out),
        Command::Eval(args) => cmd_eval(cli, args, out),
        Command::Tokens { files, whitespace } => cmd_tokens(cli, files, *whitespace, out),
    }
}

fn cmd_compress(cli: &Cli, target: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let tok = tokenizer(&config)?;
    let templates = templates(&config)?;
    let source = source(&config)?;
    let catalog = QuestionTypeCatalog::load(&config.paths.catalog)?;
    let client = client(backend(cli, &config)?, tok.clone(), &config);
    let options = CompressionOptions {
        max_attempts: config.compression.max_attempts,
        required_api_names: config.required_api_names(),
        include_generic: config.compression.include_generic,
        workers: config.run.workers,
        created_at: std::env::var("SOURCE_DATE_EPOCH").ok(),
        max_output_tokens: config
            .compression
            .max_output_tokens
            .unwrap_or(CompressionOptions::default().max_output_tokens),
    };
    let agg = aggregator(&config);
    let set = Compressor::new(&client, &templates, agg.clone(), options).build_compressed_set(&source, &catalog)?;
    let path = target.map(Path::to_path_buf).unwrap_or_else(|| config.paths.compressed_set.clone());
    set.save(&path)?;
    for w in &set.provenance.warnings {
        eprintln!("warning: {w}");
    }

    let table = token_table(&tok, &templates, &source, &catalog, &set, &agg)?;
    write!(out, "{}", table.render()).map_err(out_err)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Per-component token accounting for a built set.
pub fn token_table(
    tok: &Tokenizer,
    templates: &Templates,
    source: &PrepromptSource,
    catalog: &QuestionTypeCatalog,
    set: &CompressedPromptSet,
    aggregator: &Aggregator,
) -> Result<TokenTable, CliError> {
    let original_total = tok.count(&source.render(aggregator));
    let original_defs = tok.count(source.api_definitions.source_text());
    let instruction = tok.count(source.coding_instruction());
    let classification = tok.count(
        &templates
            .render_classification_prompt(catalog)
            .map_err(|e| CliError::Config(e.to_string()))?,
    );
    let types: Vec<(String, usize)> = catalog
        .names()
        .filter_map(|n| set.bundle(n).map(|b| (n.to_string(), tok.count(&b.joined_code()))))
        .collect();
    Ok(TokenTable::build(&TableInput {
        original_defs,
        original_snippets: original_total.saturating_sub(original_defs + instruction),
        original_total,
        compressed_defs: tok.count(set.api_defs().source_text()),
        compressed_types: &types,
        instruction,
        classification,
    }))
}

fn read_questions(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if text.trim_start().starts_with('{') {
        return Ok(parse_dataset(&text)?.into_iter().map(|r| r.question).collect());
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn cmd_classify(cli: &Cli, question: Option<&str>, batch: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let mut questions: Vec<String> = question.map(str::to_string).into_iter().collect();
    if let Some(path) = batch {
        questions.extend(read_questions(path)?);
    }
    if questions.is_empty() {
        return Err(CliError::Config("give a question or --batch FILE".into()));
    }
    let catalog = QuestionTypeCatalog::load(&config.paths.catalog)?;
    if !catalog.contains(&config.run.fallback_type) {
        return Err(CliError::Config(format!(
            "fallback type `{}` is not in the catalog",
            config.run.fallback_type
        )));
    }
    let templates = templates(&config)?;
    let prompt = templates
        .render_classification_prompt(&catalog)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let client = client(backend(cli, &config)?, tokenizer(&config)?, &config);
    let results = map_ordered(&questions, config.run.workers, |_, q| {
        classify_question(q, &prompt, &catalog, &client, &config.run.fallback_type)
    });
    for r in results {
        let c = r?;
        writeln!(out, "{}", c.type_name).map_err(out_err)?;
    }
    Ok(())
}

fn mode_from(config: &RunConfig, arg: Option<&str>) -> Result<Mode, CliError> {
    let mode = match arg {
        Some(m) => m.parse().map_err(CliError::Config)?,
        None => config.mode.clone(),
    };
    config.check_mode(&mode).map_err(CliError::Config)?;
    Ok(mode)
}

fn dataset_path(config: &RunConfig, arg: Option<&Path>) -> Result<PathBuf, CliError> {
    arg.map(Path::to_path_buf)
        .or_else(|| config.paths.dataset.clone())
        .ok_or_else(|| CliError::Config("no dataset given and paths.dataset is not set".into()))
}

fn sample(config: &RunConfig) -> Option<SampleSpec> {
    match (config.run.sample_size, config.run.sample_seed) {
        (Some(size), Some(seed)) => Some(SampleSpec { size, seed }),
        _ => None,
    }
}

fn cmd_infer(cli: &Cli, args: &InferArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let mode = mode_from(&config, args.mode.as_deref())?;
    let tok = tokenizer(&config)?;
    let templates = templates(&config)?;
    let source = source(&config)?;
    let catalog = QuestionTypeCatalog::load(&config.paths.catalog)?;
    let set = load_set(&config, &tok)?;
    let backend: Arc<dyn Backend> = if args.dry_run {
        Arc::new(OfflineBackend)
    } else {
        backend(cli, &config)?
    };
    let client = client(backend, tok, &config);
    let exec = executor(&config)?;
    let pipeline = Pipeline::new(
        &set,
        &source,
        &catalog,
        &templates,
        &client,
        exec.as_ref(),
        aggregator(&config),
        pipeline_options(&config, true),
    )?;
    pipeline.validate_mode(&mode)?;

    if args.dry_run {
        let question = args
            .question
            .as_deref()
            .ok_or_else(|| CliError::Config("--dry-run needs --question".into()))?;
        let type_name = match (&mode, &args.type_name) {
            (Mode::FixedType(t), _) => Some(t.clone()),
            (_, Some(t)) => Some(t.clone()),
            (Mode::Adaptive | Mode::OracleType | Mode::RandomType, None) => {
                eprintln!("note: no --type given; showing the fallback type `{}`", config.run.fallback_type);
                Some(config.run.fallback_type.clone())
            }
            _ => None,
        };
        let preprompt = pipeline.preprompt(&mode, type_name.as_deref())?;
        write!(out, "{}", pcomp_core::concat_prompt(&preprompt, question)).map_err(out_err)?;
        writeln!(out).map_err(out_err)?;
        let b = pipeline.token_budget(question, &mode, type_name.as_deref());
        eprintln!("{}", budget_line(&b));
        return Ok(());
    }

    if let Some(question) = &args.question {
        let record = QaRecord {
            id: "q".into(),
            question: question.clone(),
            scene_ref: args.scene.clone(),
            gold_answer: String::new(),
            gold_type: args.type_name.clone(),
        };
        let outcome = pipeline.answer_question(&record, &mode);
        writeln!(out, "answer: {}", outcome.result.answer.as_deref().unwrap_or("")).map_err(out_err)?;
        writeln!(out, "status: {}", outcome.result.status).map_err(out_err)?;
        if let Some(t) = &outcome.predicted_type {
            writeln!(out, "type: {t}{}", if outcome.fallback { " (fallback)" } else { "" }).map_err(out_err)?;
        }
        writeln!(out, "{}", budget_line(&outcome.budget)).map_err(out_err)?;
        if let Some(f) = &outcome.result.failure {
            eprintln!("{:?} stage failed: {}", f.stage, f.message);
            return Err(match f.kind {
                pcomp_core::inference::FailureKind::Backend => CliError::Backend(f.message.clone()),
                pcomp_core::inference::FailureKind::Validation => CliError::Validation(f.message.clone()),
            });
        }
        return Ok(());
    }

    let records = load_dataset(&dataset_path(&config, args.dataset.as_deref())?)?;
    let run = run_eval(
        &pipeline,
        &records,
        &EvalOptions {
            mode,
            workers: config.run.workers,
            sample: sample(&config),
        },
    )?;
    for l in &run.logs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            l.outcome.id,
            l.outcome.result.answer.as_deref().unwrap_or("-"),
            l.outcome.result.status,
            l.outcome.budget.total
        )
        .map_err(out_err)?;
    }
    let dir = &config.paths.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("infer.records.jsonl");
    std::fs::write(&path, run.log_jsonl()).map_err(|e| io_err(&path, e))?;
    eprintln!("wrote {}", path.display());
    backend_status(&run)
}

fn budget_line(b: &pcomp_core::TokenBudget) -> String {
    format!(
        "budget: total={} api_defs={} instruction={} classification={} snippets={} question={}",
        b.total, b.api_defs_tokens, b.instruction_tokens, b.classification_tokens, b.snippet_tokens, b.question_tokens
    )
}

fn backend_status(run: &EvalRun) -> Result<(), CliError> {
    match run.report.backend_failures() {
        0 => Ok(()),
        n => Err(CliError::Backend(format!("{n} record(s) failed on a backend call"))),
    }
}

fn stem(mode: &Mode) -> String {
    mode.to_string().replace(':', "-")
}

fn write_run(run: &EvalRun, dir: &Path, stem: &str) -> Result<(), CliError> {
    run.write(dir, stem)?;
    let audited = audit_log(&run.log_jsonl())?;
    if audited != run.report {
        return Err(CliError::Validation(
            "report does not match the aggregate recomputed from its per-record log".into(),
        ));
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let tok = tokenizer(&config)?;
    let templates = templates(&config)?;
    let source = source(&config)?;
    let catalog = QuestionTypeCatalog::load(&config.paths.catalog)?;
    let set = load_set(&config, &tok)?;
    let client = client(backend(cli, &config)?, tok, &config);
    let exec = executor(&config)?;
    let pipeline = Pipeline::new(
        &set,
        &source,
        &catalog,
        &templates,
        &client,
        exec.as_ref(),
        aggregator(&config),
        pipeline_options(&config, true),
    )?;
    let records = load_dataset(&dataset_path(&config, args.dataset.as_deref())?)?;
    let dir = args.out.clone().unwrap_or_else(|| config.paths.output_dir.clone());
    let workers = args.workers.unwrap_or(config.run.workers).max(1);

    if args.sweep {
        let modes = Mode::sweep(&catalog);
        let mut reports = Vec::new();
        let mut backend_failures = 0;
        for (mode, result) in run_sweep(&pipeline, &records, &modes, workers, sample(&config)) {
            match result {
                Ok(run) => {
                    write_run(&run, &dir, &stem(&mode))?;
                    backend_failures += run.report.backend_failures();
                    reports.push(run.report);
                }
                Err(pcomp_core::eval::EvalError::EmptyDataset) => {
                    return Err(CliError::Config("dataset is empty".into()));
                }
                Err(e) => eprintln!("skipping {mode}: {e}"),
            }
        }
        let summary = render_sweep(&reports);
        let path = dir.join("sweep.txt");
        std::fs::write(&path, &summary).map_err(|e| io_err(&path, e))?;
        write!(out, "{summary}").map_err(out_err)?;
        return match backend_failures {
            0 => Ok(()),
            n => Err(CliError::Backend(format!("{n} record(s) failed on a backend call"))),
        };
    }

    let mode = mode_from(&config, args.mode.as_deref())?;
    let run = run_eval(
        &pipeline,
        &records,
        &EvalOptions {
            mode: mode.clone(),
            workers,
            sample: sample(&config),
        },
    )?;
    write_run(&run, &dir, &stem(&mode))?;
    write!(out, "{}", run.report.render_text()).map_err(out_err)?;
    backend_status(&run)
}

fn cmd_tokens(cli: &Cli, files: &[PathBuf], whitespace: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let tok = if whitespace {
        Tokenizer::load(&TokenizerSpec::Whitespace)?
    } else {
        tokenizer(&load_config(cli)?)?
    };
    for path in files {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        writeln!(out, "{}\t{}", tok.count(&text), path.display()).map_err(out_err)?;
    }
    Ok(())
}
