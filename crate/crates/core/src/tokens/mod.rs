//! Token counting.
//!
//! Two tokenizers are built in: a byte-pair tokenizer loaded from a
//! tiktoken-format vocabulary file and a whitespace/punctuation fallback.
//! Every report records [`Tokenizer::id`], since counts differ between them.

mod bpe;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bpe::{BpeTokenizer, CL100K_PATTERN};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("tokenizer unavailable: {path}: {source}")]
    TokenizerUnavailable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad vocabulary: {0}")]
    BadVocabulary(String),
}

/// Declarative tokenizer choice, as written in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    Bpe {
        vocab: PathBuf,
        #[serde(default)]
        pattern: Option<String>,
    },
    Whitespace,
}

#[derive(Debug, Clone)]
pub enum Tokenizer {
    Bpe { id: String, inner: Arc<BpeTokenizer> },
    Whitespace,
}

impl Tokenizer {
    pub fn load(spec: &TokenizerSpec) -> Result<Self, TokenizerError> {
        match spec {
            TokenizerSpec::Whitespace => Ok(Tokenizer::Whitespace),
            TokenizerSpec::Bpe { vocab, pattern } => {
                Self::bpe_from_file(vocab, pattern.as_deref().unwrap_or(CL100K_PATTERN))
            }
        }
    }

    pub fn bpe_from_file(path: &Path, pattern: &str) -> Result<Self, TokenizerError> {
        let vocab = std::fs::read_to_string(path).map_err(|source| TokenizerError::TokenizerUnavailable {
            path: path.display().to_string(),
            source,
        })?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("vocab")
            .to_string();
        Ok(Tokenizer::Bpe {
            id: format!("bpe:{stem}"),
            inner: Arc::new(BpeTokenizer::from_vocab(&vocab, pattern)?),
        })
    }

    pub fn id(&self) -> &str {
        match self {
            Tokenizer::Bpe { id, .. } => id,
            Tokenizer::Whitespace => "whitespace",
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Bpe { inner, .. } => inner.count(text),
            Tokenizer::Whitespace => count_whitespace_punct(text),
        }
    }
}

/// Runs of alphanumerics count as one token, every other visible character
/// counts as one, whitespace is free.
pub fn count_whitespace_punct(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}
