use std::collections::BTreeMap;

use super::catalog::{QuestionType, QuestionTypeCatalog};
use super::extract::{extract_all_code, extract_code, split_snippets};
use super::set::{CompressedPromptSet, PartTokens, Provenance};
use super::templates::Templates;
use super::CompressionError;
use crate::llm::{LlmClient, LlmRequest, DEFAULT_COMPRESSION_MAX_TOKENS};
use crate::pool::map_ordered;
use crate::preprompt::{
    parse_api_definitions, Aggregator, ApiDefinitionIndex, PrepromptSource, SnippetBundle, SnippetRecord,
};

/// The nine `ImagePatch` methods and four helper functions a compressed
/// definition text must keep.
pub const IMAGE_PATCH_API_NAMES: [&str; 13] = [
    "crop",
    "overlaps_with",
    "find",
    "exists",
    "best_text_match",
    "verify_property",
    "simple_query",
    "llm_query",
    "compute_depth",
    "distance",
    "best_image_match",
    "bool_to_yesno",
    "coerce_to_numeric",
];

pub const GENERIC_BUNDLE: &str = "generic";

#[derive(Debug, Clone)]
pub struct CompressionOptions {
    /// Attempts per part, including the first.
    pub max_attempts: u32,
    /// Names the compressed definitions must keep. `None` means every public
    /// (non-underscore) name of the source definitions.
    pub required_api_names: Option<Vec<String>>,
    /// Also build the type-agnostic bundle for the simple-compression mode.
    pub include_generic: bool,
    pub workers: usize,
    pub created_at: Option<String>,
    pub max_output_tokens: usize,
}

impl Default for CompressionOptions {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            required_api_names: None,
            include_generic: true,
            workers: 1,
            created_at: None,
            max_output_tokens: DEFAULT_COMPRESSION_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedDefinitions {
    pub index: ApiDefinitionIndex,
    pub attempts: u32,
    pub warnings: Vec<String>,
}

/// Runs the one-time compression phase against a model.
pub struct Compressor<'a> {
    client: &'a LlmClient,
    templates: &'a Templates,
    aggregator: Aggregator,
    options: CompressionOptions,
}

impl<'a> Compressor<'a> {
    pub fn new(client: &'a LlmClient, templates: &'a Templates, aggregator: Aggregator, options: CompressionOptions) -> Self {
        Self {
            client,
            templates,
            aggregator,
            options,
        }
    }

    fn required_names(&self, source: &PrepromptSource) -> Vec<String> {
        match &self.options.required_api_names {
            Some(names) => names.clone(),
            None => public_names(&source.api_definitions),
        }
    }

    /// Sends `prompt` and validates the reply, re-asking with the rejection
    /// reason appended until `validate` accepts or attempts run out.
    fn with_retries<T>(
        &self,
        part: &str,
        tag: &str,
        prompt: &str,
        validate: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(T, u32), CompressionError> {
        let attempts = self.options.max_attempts.max(1);
        let mut current = prompt.to_string();
        let mut reason = String::new();
        for attempt in 1..=attempts {
            let request = LlmRequest::new(current.clone(), tag).with_max_output_tokens(self.options.max_output_tokens);
            let reply = self.client.complete(&request)?;
            match validate(&reply.text) {
                Ok(value) => return Ok((value, attempt)),
                Err(why) => {
                    tracing::warn!(part, attempt, reason = %why, "compression output rejected");
                    reason = why;
                    current = crate::concat_prompt(
                        prompt,
                        &format!("\nYour previous answer was rejected: {reason}. Follow the instructions above exactly."),
                    );
                }
            }
        }
        Err(CompressionError::CompressionRejected {
            part: part.to_string(),
            attempts,
            reason,
        })
    }

    pub fn compress_api_definitions(&self, source: &PrepromptSource) -> Result<CompressedDefinitions, CompressionError> {
        let preprompt = source.render(&self.aggregator);
        let prompt = crate::concat_prompt(&preprompt, &self.templates.render_rewrite_instruction()?);
        let required = self.required_names(source);
        let (index, attempts) = self.with_retries("api_defs", "compress_defs", &prompt, |reply| {
            let code = extract_code(reply);
            let index = parse_api_definitions(&code).map_err(|e| e.to_string())?;
            let missing: Vec<&str> = required
                .iter()
                .map(String::as_str)
                .filter(|n| !index.contains_name(n))
                .collect();
            if missing.is_empty() {
                Ok(index)
            } else {
                Err(format!("missing API definitions: {}", missing.join(", ")))
            }
        })?;

        let mut warnings = Vec::new();
        let tokenizer = self.client.tokenizer();
        let before = tokenizer.count(source.api_definitions.source_text());
        let after = tokenizer.count(index.source_text());
        if after >= before {
            let w = format!("compressed API definitions are not shorter ({after} vs {before} tokens)");
            tracing::warn!("{w}");
            warnings.push(w);
        }
        Ok(CompressedDefinitions { index, attempts, warnings })
    }

    pub fn compress_code_snippets(
        &self,
        source: &PrepromptSource,
        question_type: &QuestionType,
    ) -> Result<SnippetBundle, CompressionError> {
        let instruction = self.templates.render_snippet_instruction(&question_type.definition)?;
        self.snippets_with(source, &question_type.name, &instruction)
    }

    /// Snippets compressed without type specialisation.
    pub fn compress_generic_snippets(&self, source: &PrepromptSource) -> Result<SnippetBundle, CompressionError> {
        let instruction = self.templates.render_generic_snippet_instruction()?;
        self.snippets_with(source, GENERIC_BUNDLE, &instruction)
    }

    fn snippets_with(&self, source: &PrepromptSource, label: &str, instruction: &str) -> Result<SnippetBundle, CompressionError> {
        let preprompt = source.render(&self.aggregator);
        let prompt = crate::concat_prompt(&preprompt, instruction);
        let tag = format!("compress_snippets:{label}");
        let (bundle, _) = self.with_retries(&format!("snippets:{label}"), &tag, &prompt, |reply| {
            let pieces = split_snippets(&extract_all_code(reply));
            if pieces.is_empty() {
                return Err("no recognizable code snippet in the reply".to_string());
            }
            let records = pieces.into_iter().enumerate().map(|(i, code)| SnippetRecord {
                id: format!("{label}-{}", i + 1),
                code,
            });
            SnippetBundle::from_records(records, &source.api_definitions).map_err(|e| e.to_string())
        })?;
        if !(3..=4).contains(&bundle.len()) {
            tracing::info!(label, snippets = bundle.len(), "snippet bundle size outside the usual three or four");
        }
        Ok(bundle)
    }

    /// Compresses the definitions once and one bundle per catalog type.
    /// Nothing is returned (or persisted by callers) unless every part
    /// succeeded.
    pub fn build_compressed_set(
        &self,
        source: &PrepromptSource,
        catalog: &QuestionTypeCatalog,
    ) -> Result<CompressedPromptSet, CompressionError> {
        let defs = self.compress_api_definitions(source)?;
        let bundles = map_ordered(catalog.types(), self.options.workers, |_, t| {
            self.compress_code_snippets(source, t)
        });
        let mut per_type = BTreeMap::new();
        for (t, bundle) in catalog.types().iter().zip(bundles) {
            per_type.insert(t.name.clone(), bundle?);
        }
        let generic = if self.options.include_generic {
            Some(self.compress_generic_snippets(source)?)
        } else {
            None
        };

        let tokenizer = self.client.tokenizer();
        let tokens = PartTokens {
            api_defs: tokenizer.count(defs.index.source_text()),
            types: per_type
                .iter()
                .map(|(k, b)| (k.clone(), tokenizer.count(&b.joined_code())))
                .collect(),
            generic: generic.as_ref().map(|b| tokenizer.count(&b.joined_code())),
            source_api_defs: tokenizer.count(source.api_definitions.source_text()),
            source_snippets: tokenizer.count(&source.snippets.joined_code()),
            instruction: tokenizer.count(source.coding_instruction()),
            rewrite_instruction: tokenizer.count(&self.templates.render_rewrite_instruction()?),
        };
        let provenance = Provenance {
            backend_id: self.client.backend_id().to_string(),
            tokenizer: tokenizer.id().to_string(),
            template_version: self.templates.version.clone(),
            created_at: self.options.created_at.clone(),
            tokens,
            warnings: defs.warnings,
        };
        Ok(CompressedPromptSet::new(defs.index, per_type, generic, provenance))
    }
}

/// Names of every indexed block that does not start with an underscore.
pub fn public_names(index: &ApiDefinitionIndex) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for name in index.names() {
        if !name.starts_with('_') && !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    names
}
