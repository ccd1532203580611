use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::definitions::{ApiDefinitionIndex, BlockKind};

#[derive(Debug, Error)]
pub enum SnippetError {
    #[error("snippet `{0}` has empty code")]
    EmptyCode(String),
    #[error("duplicate snippet id `{0}`")]
    DuplicateId(String),
    #[error("invalid snippet library: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub id: String,
    pub code: String,
    /// API identifiers the snippet calls, in order of first call.
    pub anchors: Vec<String>,
}

/// Wire form of a snippet; anchors are always recomputed, never stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub id: String,
    pub code: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnippetLibrary {
    pub snippets: Vec<SnippetRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnippetBundle {
    snippets: Vec<Snippet>,
}

impl SnippetBundle {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a bundle, deriving anchors against `index`.
    pub fn from_records(
        records: impl IntoIterator<Item = SnippetRecord>,
        index: &ApiDefinitionIndex,
    ) -> Result<Self, SnippetError> {
        let mut snippets: Vec<Snippet> = Vec::new();
        for record in records {
            if record.code.trim().is_empty() {
                return Err(SnippetError::EmptyCode(record.id));
            }
            if snippets.iter().any(|s| s.id == record.id) {
                return Err(SnippetError::DuplicateId(record.id));
            }
            let anchors = scan_anchor_names(&record.code, index);
            snippets.push(Snippet {
                id: record.id,
                code: record.code,
                anchors,
            });
        }
        Ok(Self { snippets })
    }

    /// Parses the `{ "snippets": [ { "id", "code" } ] }` library format.
    pub fn from_json(json: &str, index: &ApiDefinitionIndex) -> Result<Self, SnippetError> {
        let library: SnippetLibrary = serde_json::from_str(json)?;
        Self::from_records(library.snippets, index)
    }

    pub fn records(&self) -> Vec<SnippetRecord> {
        self.snippets
            .iter()
            .map(|s| SnippetRecord {
                id: s.id.clone(),
                code: s.code.clone(),
            })
            .collect()
    }

    /// Re-derives anchors against another index (e.g. compressed definitions).
    pub fn reanchor(&self, index: &ApiDefinitionIndex) -> Self {
        Self {
            snippets: self
                .snippets
                .iter()
                .map(|s| Snippet {
                    id: s.id.clone(),
                    code: s.code.clone(),
                    anchors: scan_anchor_names(&s.code, index),
                })
                .collect(),
        }
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    /// Snippet code joined by blank lines, the way the bundle reads to a model.
    pub fn joined_code(&self) -> String {
        self.snippets
            .iter()
            .map(|s| s.code.trim_end_matches('\n'))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Identifiers in `code` that name an indexed function or method and are
/// immediately followed by `(`, in first-call order without duplicates.
///
/// Class names are skipped: constructing the patch object is boilerplate in
/// every snippet and says nothing about which API the snippet demonstrates.
/// Comment text and the snippet's own `def` header are ignored.
pub fn scan_anchor_names(code: &str, index: &ApiDefinitionIndex) -> Vec<String> {
    let mut anchors: Vec<String> = Vec::new();
    for line in code.lines() {
        let code_part = strip_comment(line);
        let bytes = code_part.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c == b'"' || c == b'\'' {
                i = skip_string(bytes, i);
                continue;
            }
            if is_ident_start(c) && (i == 0 || !is_ident_char(bytes[i - 1])) {
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let ident = &code_part[start..i];
                let mut j = i;
                while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                    j += 1;
                }
                let called = j < bytes.len() && bytes[j] == b'(';
                let defined = code_part[..start].trim_end().ends_with("def");
                if called
                    && !defined
                    && index
                        .blocks()
                        .iter()
                        .any(|b| b.kind != BlockKind::Class && b.name == ident)
                    && !anchors.iter().any(|a| a == ident)
                {
                    anchors.push(ident.to_string());
                }
                continue;
            }
            i += 1;
        }
    }
    anchors
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn skip_string(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let mut i = start + 1;
    while i < bytes.len() && bytes[i] != quote {
        if bytes[i] == b'\\' {
            i += 1;
        }
        i += 1;
    }
    (i + 1).min(bytes.len())
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'#' => return &line[..i],
            b'"' | b'\'' => i = skip_string(bytes, i),
            _ => i += 1,
        }
    }
    line
}
