//! The run configuration file.
//!
//! Relative paths are resolved against the directory holding the file. The
//! API key is never stored here; `backend.api_key_env` names the environment
//! variable that holds it.

use std::path::{Path, PathBuf};

use pcomp_core::compression::{TemplatePaths, IMAGE_PATCH_API_NAMES};
use pcomp_core::inference::{Mode, DEFAULT_ENTRY_POINT, DEFAULT_FALLBACK_TYPE};
use pcomp_core::llm::Dialect;
use pcomp_core::preprompt::DEFAULT_COMMENT_PREFIX;
use pcomp_core::tokens::TokenizerSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub dialect: Dialect,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    #[serde(default)]
    pub requests_per_minute: Option<usize>,
    #[serde(default = "default_http_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub context_window: Option<usize>,
}

fn default_http_attempts() -> u32 {
    4
}

fn default_timeout_ms() -> u64 {
    120_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepromptConfig {
    pub definitions: PathBuf,
    pub snippets: PathBuf,
    pub instruction: PathBuf,
    #[serde(default = "default_comment_prefix")]
    pub comment_prefix: String,
    #[serde(default = "default_entry_point")]
    pub entry_point: String,
}

fn default_comment_prefix() -> String {
    DEFAULT_COMMENT_PREFIX.to_string()
}

fn default_entry_point() -> String {
    DEFAULT_ENTRY_POINT.to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub rewrite: PathBuf,
    pub snippets: PathBuf,
    pub specialize: PathBuf,
    pub classify: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub catalog: PathBuf,
    pub compressed_set: PathBuf,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub scene_dir: Option<PathBuf>,
    /// Replay transcript used when `--transcript` is not given.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    /// Recorded sandbox responses, used instead of a live sandbox.
    #[serde(default)]
    pub executions: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_fallback")]
    pub fallback_type: String,
    #[serde(default = "default_generation_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub max_output_tokens: Option<usize>,
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub sample_seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            seed: None,
            workers: default_workers(),
            fallback_type: default_fallback(),
            max_attempts: default_generation_attempts(),
            max_output_tokens: None,
            sample_size: None,
            sample_seed: None,
        }
    }
}

fn default_mode() -> String {
    "adaptive".into()
}

fn default_workers() -> usize {
    1
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK_TYPE.into()
}

fn default_generation_attempts() -> u32 {
    3
}

/// Which names the compressed definitions must keep.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RequiredNames {
    /// `"image_patch"` for the 13 ImagePatch API names, `"public"` for every
    /// public name of the source definitions.
    Preset(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSection {
    #[serde(default = "default_required")]
    pub required_api_names: RequiredNames,
    #[serde(default = "default_true")]
    pub include_generic: bool,
    #[serde(default = "default_generation_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub max_output_tokens: Option<usize>,
}

impl Default for CompressionSection {
    fn default() -> Self {
        Self {
            required_api_names: default_required(),
            include_generic: true,
            max_attempts: default_generation_attempts(),
            max_output_tokens: None,
        }
    }
}

fn default_required() -> RequiredNames {
    RequiredNames::Preset("public".into())
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    #[serde(default)]
    pub command: Option<Vec<String>>,
    #[serde(default = "default_time_limit")]
    pub time_limit_ms: u64,
    #[serde(default = "default_memory_limit")]
    pub memory_limit_mb: u64,
    #[serde(default = "default_true")]
    pub execute: bool,
}

impl Default for SandboxSection {
    fn default() -> Self {
        Self {
            command: None,
            time_limit_ms: default_time_limit(),
            memory_limit_mb: default_memory_limit(),
            execute: true,
        }
    }
}

fn default_time_limit() -> u64 {
    5_000
}

fn default_memory_limit() -> u64 {
    512
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    backend: Option<BackendConfig>,
    tokenizer: TokenizerSpec,
    #[serde(default)]
    templates: Option<TemplateConfig>,
    preprompt: PrepromptConfig,
    paths: PathsConfig,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    compression: CompressionSection,
    #[serde(default)]
    sandbox: SandboxSection,
}

/// A validated configuration with every path made absolute.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: Option<BackendConfig>,
    pub tokenizer: TokenizerSpec,
    pub templates: Option<TemplatePaths>,
    pub preprompt: PrepromptConfig,
    pub paths: PathsConfig,
    pub run: RunSection,
    pub mode: Mode,
    pub compression: CompressionSection,
    pub sandbox: SandboxSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let tokenizer = match raw.tokenizer {
            TokenizerSpec::Bpe { vocab, pattern } => TokenizerSpec::Bpe {
                vocab: abs(&vocab),
                pattern,
            },
            other => other,
        };
        let templates = raw.templates.map(|t| TemplatePaths {
            rewrite: abs(&t.rewrite),
            snippets: abs(&t.snippets),
            specialize: abs(&t.specialize),
            classify: abs(&t.classify),
        });
        let mut preprompt = raw.preprompt;
        preprompt.definitions = abs(&preprompt.definitions);
        preprompt.snippets = abs(&preprompt.snippets);
        preprompt.instruction = abs(&preprompt.instruction);
        let mut paths = raw.paths;
        paths.catalog = abs(&paths.catalog);
        paths.compressed_set = abs(&paths.compressed_set);
        paths.output_dir = abs(&paths.output_dir);
        for p in [&mut paths.dataset, &mut paths.scene_dir, &mut paths.transcript, &mut paths.executions]
            .into_iter()
            .flatten()
        {
            *p = abs(p);
        }
        let mode: Mode = raw.run.mode.parse()?;
        let config = Self {
            backend: raw.backend,
            tokenizer,
            templates,
            preprompt,
            paths,
            mode,
            run: raw.run,
            compression: raw.compression,
            sandbox: raw.sandbox,
        };
        config.check_mode(&config.mode)?;
        if config.run.workers == 0 {
            return Err("run.workers must be at least 1".into());
        }
        if config.run.sample_size.is_some() && config.run.sample_seed.is_none() {
            return Err("run.sample_size requires run.sample_seed".into());
        }
        if let RequiredNames::Preset(p) = &config.compression.required_api_names {
            if p != "public" && p != "image_patch" {
                return Err(format!(
                    "compression.required_api_names must be \"public\", \"image_patch\" or a list, not {p:?}"
                ));
            }
        }
        Ok(config)
    }

    /// Requirements a mode places on the configuration.
    pub fn check_mode(&self, mode: &Mode) -> Result<(), String> {
        if *mode == Mode::RandomType && self.run.seed.is_none() {
            return Err("random_type mode requires run.seed".into());
        }
        Ok(())
    }

    pub fn required_api_names(&self) -> Option<Vec<String>> {
        match &self.compression.required_api_names {
            RequiredNames::Preset(p) if p == "image_patch" => {
                Some(IMAGE_PATCH_API_NAMES.iter().map(|s| s.to_string()).collect())
            }
            RequiredNames::Preset(_) => None,
            RequiredNames::List(names) => Some(names.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[tokenizer]
kind = "whitespace"

[preprompt]
definitions = "defs.py"
snippets = "snippets.json"
instruction = "inst.txt"

[paths]
catalog = "catalog.json"
compressed_set = "out/set.json"
"#;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let c = RunConfig::parse(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(c.preprompt.definitions, Path::new("/cfg/defs.py"));
        assert_eq!(c.paths.output_dir, Path::new("/cfg/out"));
        assert_eq!(c.mode, Mode::Adaptive);
        assert!(c.backend.is_none());
    }

    #[test]
    fn random_mode_requires_seed() {
        let text = format!("{MINIMAL}\n[run]\nmode = \"random_type\"\n");
        assert!(RunConfig::parse(&text, Path::new("/")).unwrap_err().contains("seed"));
        let text = format!("{MINIMAL}\n[run]\nmode = \"random_type\"\nseed = 7\n");
        assert!(RunConfig::parse(&text, Path::new("/")).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[run]\nmoed = \"adaptive\"\n");
        assert!(RunConfig::parse(&text, Path::new("/")).is_err());
    }
}
