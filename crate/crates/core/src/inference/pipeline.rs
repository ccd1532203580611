use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::classify::classify_question;
use super::executor::{ExecutionStatus, Executor, SandboxRequest, SceneRef, TraceEvent};
use super::generate::{generate_code, GeneratedProgram, DEFAULT_ENTRY_POINT};
use super::record::QaRecord;
use super::InferenceError;
use crate::compression::{CompressedPromptSet, QuestionTypeCatalog, Templates};
use crate::llm::{LlmClient, LlmError, DEFAULT_GENERATION_MAX_TOKENS};
use crate::preprompt::{Aggregator, PrepromptSource, SnippetBundle, TokenBudget};

pub const DEFAULT_FALLBACK_TYPE: &str = "attr";

/// How the snippet bundle for a question is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Classify with the model, then use that type's bundle.
    Adaptive,
    /// Use the record's gold type.
    OracleType,
    /// Draw a type uniformly with a seeded generator.
    RandomType,
    FixedType(String),
    /// One type-agnostic bundle for every question.
    SimpleCompression,
    /// The original, uncompressed preprompt.
    NoCompression,
}

impl Mode {
    /// The ablation matrix run by an evaluation sweep.
    pub fn sweep(catalog: &QuestionTypeCatalog) -> Vec<Mode> {
        let mut modes = vec![
            Mode::NoCompression,
            Mode::SimpleCompression,
            Mode::Adaptive,
            Mode::OracleType,
            Mode::RandomType,
        ];
        modes.extend(catalog.names().map(|n| Mode::FixedType(n.to_string())));
        modes
    }

    pub fn classifies(&self) -> bool {
        matches!(self, Mode::Adaptive)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Adaptive => f.write_str("adaptive"),
            Mode::OracleType => f.write_str("oracle_type"),
            Mode::RandomType => f.write_str("random_type"),
            Mode::FixedType(t) => write!(f, "fixed_type:{t}"),
            Mode::SimpleCompression => f.write_str("simple_compression"),
            Mode::NoCompression => f.write_str("no_compression"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(t) = s.strip_prefix("fixed_type:").or_else(|| s.strip_prefix("fixed_type=")) {
            if t.trim().is_empty() {
                return Err("fixed_type needs a type name, e.g. `fixed_type:attr`".into());
            }
            return Ok(Mode::FixedType(t.trim().to_string()));
        }
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "oracle_type" | "oracle" => Ok(Mode::OracleType),
            "random_type" | "random" => Ok(Mode::RandomType),
            "simple_compression" | "simple" => Ok(Mode::SimpleCompression),
            "no_compression" | "baseline" => Ok(Mode::NoCompression),
            other => Err(format!(
                "unknown mode `{other}` (expected adaptive, oracle_type, random_type, fixed_type:<type>, simple_compression or no_compression)"
            )),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Assemble,
    Generate,
    Execute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The model backend could not be reached or refused the request.
    Backend,
    /// A model reply or a record failed validation.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub trace: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stderr_tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
}

impl ExecutionResult {
    fn failed(stage: Stage, kind: FailureKind, message: String) -> Self {
        Self {
            status: ExecutionStatus::CodingError,
            answer: None,
            trace: Vec::new(),
            stderr_tail: String::new(),
            failure: Some(StageFailure { stage, kind, message }),
        }
    }

    fn from_error(stage: Stage, err: &InferenceError) -> Self {
        let kind = match err {
            InferenceError::Llm(LlmError::BackendUnreachable { .. } | LlmError::BackendRejected { .. }) => {
                FailureKind::Backend
            }
            InferenceError::Llm(LlmError::NoTranscriptMatch { .. }) => FailureKind::Backend,
            _ => FailureKind::Validation,
        };
        Self::failed(stage, kind, err.to_string())
    }
}

/// Everything observed while answering one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOutcome {
    pub id: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_type: Option<String>,
    /// Classification fell back to the configured type.
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<GeneratedProgram>,
    pub result: ExecutionResult,
    pub budget: TokenBudget,
    pub llm_calls: usize,
    pub classification_output_tokens: usize,
    pub generation_output_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOptions {
    pub fallback_type: String,
    pub entry_point: String,
    /// Required by random mode.
    pub seed: Option<u64>,
    pub max_attempts: u32,
    pub max_output_tokens: usize,
    pub time_limit_ms: u64,
    pub memory_limit_mb: u64,
    pub execute: bool,
    /// When set, every record's scene must exist as `<dir>/<scene>.json`.
    pub scene_dir: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            fallback_type: DEFAULT_FALLBACK_TYPE.to_string(),
            entry_point: DEFAULT_ENTRY_POINT.to_string(),
            seed: None,
            max_attempts: 3,
            max_output_tokens: DEFAULT_GENERATION_MAX_TOKENS,
            time_limit_ms: 5_000,
            memory_limit_mb: 512,
            execute: true,
            scene_dir: None,
        }
    }
}

/// `Ψ(p̂_def, p_inst, ĉ_t)` for one type of a compressed set.
pub fn assemble_preprompt(
    set: &CompressedPromptSet,
    type_name: &str,
    instruction: &str,
    aggregator: &Aggregator,
) -> Result<String, InferenceError> {
    let bundle = set
        .bundle(type_name)
        .ok_or_else(|| InferenceError::UnknownType(type_name.to_string()))?;
    Ok(aggregator.aggregate(set.api_defs(), instruction, bundle))
}

#[derive(Debug, Clone)]
struct PartCounts {
    api_defs: usize,
    instruction: usize,
    classification: usize,
    per_type: BTreeMap<String, usize>,
    generic: Option<usize>,
    baseline_preprompt: usize,
    source_api_defs: usize,
}

/// The inference phase bound to one compressed set, catalog, model and
/// executor. Shared read-only across workers.
pub struct Pipeline<'a> {
    set: &'a CompressedPromptSet,
    source: &'a PrepromptSource,
    catalog: &'a QuestionTypeCatalog,
    client: &'a LlmClient,
    executor: &'a dyn Executor,
    aggregator: Aggregator,
    options: PipelineOptions,
    classification_prompt: String,
    template_version: String,
    baseline_preprompt: String,
    counts: PartCounts,
}

impl<'a> Pipeline<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        set: &'a CompressedPromptSet,
        source: &'a PrepromptSource,
        catalog: &'a QuestionTypeCatalog,
        templates: &Templates,
        client: &'a LlmClient,
        executor: &'a dyn Executor,
        aggregator: Aggregator,
        options: PipelineOptions,
    ) -> Result<Self, InferenceError> {
        if !catalog.contains(&options.fallback_type) {
            return Err(InferenceError::Config(format!(
                "fallback type `{}` is not in the catalog",
                options.fallback_type
            )));
        }
        let missing: Vec<&str> = catalog.names().filter(|n| set.bundle(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(InferenceError::Config(format!(
                "compressed set has no bundle for type(s): {}",
                missing.join(", ")
            )));
        }
        let classification_prompt = templates.render_classification_prompt(catalog)?;
        let baseline_preprompt = source.render(&aggregator);
        let tok = client.tokenizer();
        let counts = PartCounts {
            api_defs: tok.count(set.api_defs().source_text()),
            instruction: tok.count(source.coding_instruction()),
            classification: tok.count(&classification_prompt),
            per_type: catalog
                .names()
                .map(|n| (n.to_string(), tok.count(&set.bundle(n).expect("checked above").joined_code())))
                .collect(),
            generic: set.generic().map(|b| tok.count(&b.joined_code())),
            baseline_preprompt: tok.count(&baseline_preprompt),
            source_api_defs: tok.count(source.api_definitions.source_text()),
        };
        Ok(Self {
            set,
            source,
            catalog,
            client,
            executor,
            aggregator,
            options,
            classification_prompt,
            template_version: templates.version.clone(),
            baseline_preprompt,
            counts,
        })
    }

    pub fn options(&self) -> &PipelineOptions {
        &self.options
    }

    pub fn classification_prompt(&self) -> &str {
        &self.classification_prompt
    }

    pub fn set(&self) -> &CompressedPromptSet {
        self.set
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    pub fn executor_id(&self) -> &str {
        self.executor.id()
    }

    pub fn catalog(&self) -> &QuestionTypeCatalog {
        self.catalog
    }

    pub fn client(&self) -> &LlmClient {
        self.client
    }

    /// Mode requirements that do not depend on individual records.
    pub fn validate_mode(&self, mode: &Mode) -> Result<(), InferenceError> {
        match mode {
            Mode::RandomType if self.options.seed.is_none() => {
                Err(InferenceError::Config("random_type mode requires a seed".into()))
            }
            Mode::FixedType(t) if !self.catalog.contains(t) => Err(InferenceError::UnknownType(t.clone())),
            Mode::SimpleCompression if self.set.generic().is_none() => Err(InferenceError::Config(
                "simple_compression mode needs a compressed set built with a generic bundle".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Type drawn for `record` in random mode. Depends only on the seed and
    /// the record id, so it is independent of worker scheduling.
    pub fn random_type(&self, seed: u64, record_id: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(record_id.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        let names: Vec<&str> = self.catalog.names().collect();
        names[rng.random_range(0..names.len())].to_string()
    }

    /// Type chosen without any model call, for every mode except adaptive.
    fn preset_type(&self, record: &QaRecord, mode: &Mode) -> Result<Option<String>, InferenceError> {
        match mode {
            Mode::OracleType => match &record.gold_type {
                Some(t) if self.catalog.contains(t) => Ok(Some(t.clone())),
                Some(t) => Err(InferenceError::UnknownType(t.clone())),
                None => Err(InferenceError::Config(format!("record `{}` has no gold type", record.id))),
            },
            Mode::RandomType => {
                let seed = self
                    .options
                    .seed
                    .ok_or_else(|| InferenceError::Config("random_type mode requires a seed".into()))?;
                Ok(Some(self.random_type(seed, &record.id)))
            }
            Mode::FixedType(t) => {
                if self.catalog.contains(t) {
                    Ok(Some(t.clone()))
                } else {
                    Err(InferenceError::UnknownType(t.clone()))
                }
            }
            Mode::Adaptive | Mode::SimpleCompression | Mode::NoCompression => Ok(None),
        }
    }

    fn bundle_for(&self, mode: &Mode, type_name: Option<&str>) -> Result<&SnippetBundle, InferenceError> {
        match mode {
            Mode::SimpleCompression => self
                .set
                .generic()
                .ok_or_else(|| InferenceError::Config("compressed set has no generic bundle".into())),
            _ => {
                let t = type_name.ok_or_else(|| InferenceError::UnknownType(String::new()))?;
                self.set.bundle(t).ok_or_else(|| InferenceError::UnknownType(t.to_string()))
            }
        }
    }

    /// The preprompt the generation call would use. `type_name` is ignored
    /// by the two modes that do not select a per-type bundle.
    pub fn preprompt(&self, mode: &Mode, type_name: Option<&str>) -> Result<String, InferenceError> {
        if *mode == Mode::NoCompression {
            return Ok(self.baseline_preprompt.clone());
        }
        let bundle = self.bundle_for(mode, type_name)?;
        Ok(self
            .aggregator
            .aggregate(self.set.api_defs(), self.source.coding_instruction(), bundle))
    }

    /// Budget for a question under `mode`, given the type actually used.
    pub fn token_budget(&self, question: &str, mode: &Mode, type_name: Option<&str>) -> TokenBudget {
        let q = self.client.tokenizer().count(question);
        let c = &self.counts;
        let snippets = |t: Option<&str>| t.and_then(|t| c.per_type.get(t)).copied().unwrap_or(0);
        match mode {
            Mode::Adaptive => TokenBudget::adaptive(c.api_defs, c.instruction, c.classification, snippets(type_name), q),
            Mode::OracleType | Mode::RandomType | Mode::FixedType(_) => {
                TokenBudget::single_call(c.api_defs, c.instruction, snippets(type_name), q)
            }
            Mode::SimpleCompression => {
                TokenBudget::single_call(c.api_defs, c.instruction, c.generic.unwrap_or(0), q)
            }
            Mode::NoCompression => {
                let snippets = c.baseline_preprompt.saturating_sub(c.source_api_defs + c.instruction);
                TokenBudget::from_preprompt(c.baseline_preprompt, c.instruction, snippets, q)
            }
        }
    }

    pub fn answer_question(&self, record: &QaRecord, mode: &Mode) -> QaOutcome {
        let mut outcome = QaOutcome {
            id: record.id.clone(),
            mode: mode.clone(),
            predicted_type: None,
            fallback: false,
            classification_reply: None,
            program: None,
            result: ExecutionResult::failed(Stage::Assemble, FailureKind::Validation, String::new()),
            budget: self.token_budget(&record.question, mode, None),
            llm_calls: 0,
            classification_output_tokens: 0,
            generation_output_tokens: 0,
        };

        let type_name = if mode.classifies() {
            outcome.llm_calls += 1;
            match classify_question(
                &record.question,
                &self.classification_prompt,
                self.catalog,
                self.client,
                &self.options.fallback_type,
            ) {
                Ok(c) => {
                    outcome.fallback = c.fallback;
                    outcome.classification_output_tokens = c.output_tokens;
                    outcome.classification_reply = Some(c.raw_reply);
                    Some(c.type_name)
                }
                Err(e) => {
                    outcome.result = ExecutionResult::from_error(Stage::Classify, &e.into());
                    return outcome;
                }
            }
        } else {
            match self.preset_type(record, mode) {
                Ok(t) => t,
                Err(e) => {
                    outcome.result = ExecutionResult::from_error(Stage::Classify, &e);
                    return outcome;
                }
            }
        };
        outcome.predicted_type = type_name.clone();
        outcome.budget = self.token_budget(&record.question, mode, type_name.as_deref());

        let preprompt = match self.preprompt(mode, type_name.as_deref()) {
            Ok(p) => p,
            Err(e) => {
                outcome.result = ExecutionResult::from_error(Stage::Assemble, &e);
                return outcome;
            }
        };

        let generated = generate_code(
            &preprompt,
            &record.question,
            self.client,
            &self.options.entry_point,
            self.options.max_attempts,
            self.options.max_output_tokens,
        );
        let mut program = match generated {
            Ok(p) => p,
            Err(e) => {
                outcome.llm_calls += match &e {
                    InferenceError::CodeExtractionFailed { attempts, .. } => *attempts as usize,
                    _ => 1,
                };
                outcome.result = ExecutionResult::from_error(Stage::Generate, &e);
                return outcome;
            }
        };
        outcome.llm_calls += program.attempts as usize;
        outcome.generation_output_tokens = program.output_tokens;
        program.source_budget = Some(outcome.budget);

        outcome.result = self.execute(record, &program);
        outcome.program = Some(program);
        outcome
    }

    fn execute(&self, record: &QaRecord, program: &GeneratedProgram) -> ExecutionResult {
        if !self.options.execute {
            return ExecutionResult {
                status: ExecutionStatus::SandboxUnavailable,
                answer: None,
                trace: Vec::new(),
                stderr_tail: "execution disabled".into(),
                failure: None,
            };
        }
        if let Some(dir) = &self.options.scene_dir {
            if !dir.join(format!("{}.json", record.scene_ref)).is_file() {
                return ExecutionResult::failed(
                    Stage::Execute,
                    FailureKind::Validation,
                    format!("scene `{}` not found in {}", record.scene_ref, dir.display()),
                );
            }
        }
        let response = self
            .executor
            .execute(&SandboxRequest {
                program: program.code.clone(),
                entry_point: program.entry_point.clone(),
                scene: SceneRef::Id(record.scene_ref.clone()),
                time_limit_ms: self.options.time_limit_ms,
                memory_limit_mb: self.options.memory_limit_mb,
            })
            .normalized();
        ExecutionResult {
            status: response.status,
            answer: response.answer,
            trace: response.trace,
            stderr_tail: response.stderr_tail,
            failure: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_round_trip() {
        for s in [
            "adaptive",
            "oracle_type",
            "random_type",
            "fixed_type:attr",
            "simple_compression",
            "no_compression",
        ] {
            let m: Mode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{s}\""));
        }
        assert!("fixed_type:".parse::<Mode>().is_err());
        assert!("bogus".parse::<Mode>().is_err());
    }
}
