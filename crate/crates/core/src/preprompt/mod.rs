//! Preprompt material: API definitions, snippets, coding instruction.

mod aggregate;
mod budget;
mod definitions;
mod snippets;

use std::path::Path;

use thiserror::Error;

pub use aggregate::{aggregate, Aggregation, Aggregator, Insertion, DEFAULT_COMMENT_PREFIX};
pub use budget::{BudgetKind, TokenBudget};
pub use definitions::{
    parse_api_definitions, ApiDefinitionIndex, BlockKind, DefinitionBlock, DefinitionError, Span,
};
pub use snippets::{scan_anchor_names, Snippet, SnippetBundle, SnippetError, SnippetLibrary, SnippetRecord};

#[derive(Debug, Error)]
pub enum PrepromptError {
    #[error(transparent)]
    Definitions(#[from] DefinitionError),
    #[error(transparent)]
    Snippets(#[from] SnippetError),
    #[error("coding instruction is empty")]
    EmptyInstruction,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The uncompressed preprompt: definitions, snippet library and instruction.
#[derive(Debug, Clone)]
pub struct PrepromptSource {
    pub api_definitions: ApiDefinitionIndex,
    pub snippets: SnippetBundle,
    coding_instruction: String,
}

impl PrepromptSource {
    pub fn new(
        api_definitions: ApiDefinitionIndex,
        snippets: SnippetBundle,
        coding_instruction: impl Into<String>,
    ) -> Result<Self, PrepromptError> {
        let coding_instruction = coding_instruction.into();
        if coding_instruction.trim().is_empty() {
            return Err(PrepromptError::EmptyInstruction);
        }
        Ok(Self {
            api_definitions,
            snippets,
            coding_instruction,
        })
    }

    /// Loads the three fixture files: definition text, snippet library JSON
    /// and instruction text.
    pub fn load(definitions: &Path, snippets: &Path, instruction: &Path) -> Result<Self, PrepromptError> {
        let defs = read(definitions)?;
        let index = parse_api_definitions(&defs)?;
        let bundle = SnippetBundle::from_json(&read(snippets)?, &index)?;
        Self::new(index, bundle, read(instruction)?)
    }

    pub fn coding_instruction(&self) -> &str {
        &self.coding_instruction
    }

    /// The full uncompressed preprompt.
    pub fn render(&self, aggregator: &Aggregator) -> String {
        aggregator.aggregate(&self.api_definitions, &self.coding_instruction, &self.snippets)
    }
}

pub(crate) fn read(path: &Path) -> Result<String, PrepromptError> {
    std::fs::read_to_string(path).map_err(|source| PrepromptError::Io {
        path: path.display().to_string(),
        source,
    })
}
