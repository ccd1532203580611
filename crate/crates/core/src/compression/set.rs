//! The persisted compressed prompt set.
//!
//! One JSON document:
//!
//! ```text
//! { "version": 1, "tokenizer": "...", "api_defs": "...",
//!   "types": { "<name>": { "snippets": [ { "id", "code" } ] } },
//!   "generic": { "snippets": [...] },            // optional
//!   "provenance": { ... }, "checksum": "<sha256 hex>" }
//! ```
//!
//! The checksum covers every other field. Snippet anchors are not stored;
//! they are re-derived against the compressed definitions on load.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CompressionError;
use crate::preprompt::{parse_api_definitions, ApiDefinitionIndex, SnippetBundle, SnippetRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartTokens {
    pub api_defs: usize,
    pub types: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic: Option<usize>,
    /// Uncompressed definitions, for the reduction table.
    pub source_api_defs: usize,
    /// Uncompressed snippet library.
    pub source_snippets: usize,
    pub instruction: usize,
    pub rewrite_instruction: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_id: String,
    pub tokenizer: String,
    pub template_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub tokens: PartTokens,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedPromptSet {
    compressed_api_defs: ApiDefinitionIndex,
    per_type: BTreeMap<String, SnippetBundle>,
    /// Type-agnostic bundle used by the simple-compression ablation.
    generic: Option<SnippetBundle>,
    pub provenance: Provenance,
}

impl CompressedPromptSet {
    pub fn new(
        compressed_api_defs: ApiDefinitionIndex,
        per_type: BTreeMap<String, SnippetBundle>,
        generic: Option<SnippetBundle>,
        provenance: Provenance,
    ) -> Self {
        let per_type = per_type
            .into_iter()
            .map(|(k, b)| (k, b.reanchor(&compressed_api_defs)))
            .collect();
        let generic = generic.map(|b| b.reanchor(&compressed_api_defs));
        Self {
            compressed_api_defs,
            per_type,
            generic,
            provenance,
        }
    }

    pub fn api_defs(&self) -> &ApiDefinitionIndex {
        &self.compressed_api_defs
    }

    pub fn bundle(&self, type_name: &str) -> Option<&SnippetBundle> {
        self.per_type.get(type_name)
    }

    pub fn generic(&self) -> Option<&SnippetBundle> {
        self.generic.as_ref()
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.per_type.keys().map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<(), CompressionError> {
        save_set(self, path)
    }

    pub fn load(path: &Path, tokenizer_id: &str) -> Result<LoadedSet, CompressionError> {
        load_set(path, tokenizer_id)
    }

    pub fn to_json(&self) -> String {
        let body = self.body();
        let file = SetFile {
            checksum: checksum(&body),
            body,
        };
        let mut json = serde_json::to_string_pretty(&file).expect("set serializes");
        json.push('\n');
        json
    }

    fn body(&self) -> SetBody {
        SetBody {
            version: FORMAT_VERSION,
            tokenizer: self.provenance.tokenizer.clone(),
            api_defs: self.compressed_api_defs.source_text().to_string(),
            types: self
                .per_type
                .iter()
                .map(|(k, b)| (k.clone(), BundleFile { snippets: b.records() }))
                .collect(),
            generic: self.generic.as_ref().map(|b| BundleFile { snippets: b.records() }),
            provenance: self.provenance.clone(),
        }
    }
}

/// A loaded set plus anything worth warning about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedSet {
    pub set: CompressedPromptSet,
    /// The set was counted with a different tokenizer than the current one.
    pub tokenizer_mismatch: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleFile {
    snippets: Vec<SnippetRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SetBody {
    version: u32,
    tokenizer: String,
    api_defs: String,
    types: BTreeMap<String, BundleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generic: Option<BundleFile>,
    provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SetFile {
    #[serde(flatten)]
    body: SetBody,
    checksum: String,
}

fn checksum(body: &SetBody) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(body).expect("set serializes")))
}

/// Writes atomically: a partial file is never left at `path`.
pub fn save_set(set: &CompressedPromptSet, path: &Path) -> Result<(), CompressionError> {
    let io = |e: std::io::Error| CompressionError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("set")
    ));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(set.to_json().as_bytes()).and_then(|_| f.sync_all()).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_set(path: &Path, tokenizer_id: &str) -> Result<LoadedSet, CompressionError> {
    let text = std::fs::read_to_string(path).map_err(|e| CompressionError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_set(&text, tokenizer_id)
}

pub fn parse_set(text: &str, tokenizer_id: &str) -> Result<LoadedSet, CompressionError> {
    let corrupt = |m: String| CompressionError::CorruptCache(m);
    let file: SetFile = serde_json::from_str(text).map_err(|e| corrupt(format!("schema: {e}")))?;
    if file.body.version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {}", file.body.version)));
    }
    if checksum(&file.body) != file.checksum {
        return Err(corrupt("checksum mismatch".into()));
    }
    let body = file.body;
    if body.tokenizer != body.provenance.tokenizer {
        return Err(corrupt("tokenizer field disagrees with provenance".into()));
    }
    let defs = parse_api_definitions(&body.api_defs).map_err(|e| corrupt(e.to_string()))?;
    let bundle = |b: BundleFile| SnippetBundle::from_records(b.snippets, &defs).map_err(|e| corrupt(e.to_string()));
    let mut per_type = BTreeMap::new();
    for (name, b) in body.types {
        per_type.insert(name, bundle(b)?);
    }
    let generic = body.generic.map(bundle).transpose()?;
    let tokenizer_mismatch = body.tokenizer != tokenizer_id;
    if tokenizer_mismatch {
        tracing::warn!(
            stored = %body.tokenizer,
            current = %tokenizer_id,
            "compressed set was counted with a different tokenizer"
        );
    }
    Ok(LoadedSet {
        set: CompressedPromptSet {
            compressed_api_defs: defs,
            per_type,
            generic,
            provenance: body.provenance,
        },
        tokenizer_mismatch,
    })
}
