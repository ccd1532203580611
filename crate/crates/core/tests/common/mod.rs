#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use pcomp_core::compression::{CompressedPromptSet, CompressionOptions, Compressor, QuestionTypeCatalog, Templates};
use pcomp_core::inference::{load_dataset, QaRecord};
use pcomp_core::llm::{Backend, LlmClient, ReplayBackend, ReplayTranscript};
use pcomp_core::preprompt::{Aggregator, PrepromptSource};
use pcomp_core::tokens::{Tokenizer, TokenizerSpec};

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

pub fn tokenizer() -> Tokenizer {
    static TOKENIZER: OnceLock<Tokenizer> = OnceLock::new();
    TOKENIZER
        .get_or_init(|| {
            Tokenizer::load(&TokenizerSpec::Bpe {
                vocab: fixture("tokenizer/cl100k_base.tiktoken"),
                pattern: None,
            })
            .unwrap()
        })
        .clone()
}

pub fn source() -> PrepromptSource {
    PrepromptSource::load(
        &fixture("preprompt/api_definitions.py"),
        &fixture("preprompt/snippets.json"),
        &fixture("preprompt/instruction.txt"),
    )
    .unwrap()
}

pub fn catalog() -> QuestionTypeCatalog {
    QuestionTypeCatalog::load(&fixture("gqa/catalog.json")).unwrap()
}

pub fn dataset() -> Vec<QaRecord> {
    load_dataset(&fixture("gqa/dataset.jsonl")).unwrap()
}

/// A replay backend over the concatenation of the named transcript files.
pub fn replay(files: &[&str]) -> Arc<dyn Backend> {
    let text: String = files.iter().map(|f| read(f)).collect::<Vec<_>>().join("\n");
    Arc::new(ReplayBackend::new(ReplayTranscript::parse(&text).unwrap()))
}

pub fn client(files: &[&str]) -> LlmClient {
    LlmClient::new(replay(files), tokenizer())
}

/// Compresses the fixture preprompt through the recorded compression replies.
pub fn compressed_set() -> CompressedPromptSet {
    static SET: OnceLock<CompressedPromptSet> = OnceLock::new();
    SET.get_or_init(compress_fixture).clone()
}

pub fn compress_fixture() -> CompressedPromptSet {
    let client = client(&["gqa/transcripts/compression.jsonl"]);
    let templates = Templates::builtin();
    let options = CompressionOptions {
        required_api_names: Some(
            pcomp_core::compression::IMAGE_PATCH_API_NAMES.iter().map(|s| s.to_string()).collect(),
        ),
        ..CompressionOptions::default()
    };
    Compressor::new(&client, &templates, Aggregator::default(), options)
        .build_compressed_set(&source(), &catalog())
        .unwrap()
}
