//! The single frozen text-to-text model behind every pipeline stage.
//!
//! A [`Backend`] only moves text. [`LlmClient`] wraps one and adds what every
//! call needs regardless of backend: request validation, the context-window
//! guard and token counts recomputed with the configured tokenizer whenever
//! the backend does not report them.

mod clock;
mod http;
mod record;
mod replay;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tokens::Tokenizer;

pub use clock::{Clock, FakeClock, RateLimiter, SystemClock};
pub use http::{Dialect, HttpBackend, HttpConfig};
pub use record::RecordingBackend;
pub use replay::{Pattern, ReplayBackend, ReplayTranscript, TranscriptLine};

pub const DEFAULT_GENERATION_MAX_TOKENS: usize = 512;
pub const DEFAULT_CLASSIFICATION_MAX_TOKENS: usize = 16;
pub const DEFAULT_COMPRESSION_MAX_TOKENS: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("backend unreachable after {attempts} attempt(s): {last_error}")]
    BackendUnreachable { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}: {body}")]
    BackendRejected { status: u16, body: String },
    #[error("no transcript entry matches prompt {hash} ({prompt_head:?})")]
    NoTranscriptMatch { hash: String, prompt_head: String },
    #[error("prompt of {input_tokens} tokens exceeds the context window of {context_window}")]
    ContextOverflow { input_tokens: usize, context_window: usize },
    #[error("failed to write transcript: {0}")]
    TranscriptWriteFailed(String),
    #[error("failed to load transcript: {0}")]
    TranscriptLoadFailed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub max_output_tokens: usize,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    /// Free-form stage label, e.g. `classify` or `compress_defs`.
    pub tag: String,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, tag: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens: DEFAULT_GENERATION_MAX_TOKENS,
            temperature: 0.0,
            stop_sequences: Vec::new(),
            tag: tag.into(),
        }
    }

    pub fn with_max_output_tokens(mut self, n: usize) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// What a backend hands back; counts are optional.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    pub input_tokens: Option<usize>,
    pub output_tokens: Option<usize>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub backend_id: String,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }
}

/// Hex SHA-256 of the exact prompt bytes; the replay key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// First 120 characters of a prompt, for human-readable transcripts.
pub fn prompt_head(prompt: &str) -> String {
    prompt.chars().take(120).collect()
}

pub struct LlmClient {
    backend: Arc<dyn Backend>,
    tokenizer: Tokenizer,
    context_window: Option<usize>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("backend", &self.backend.id())
            .field("tokenizer", &self.tokenizer.id())
            .field("context_window", &self.context_window)
            .finish()
    }
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>, tokenizer: Tokenizer) -> Self {
        Self {
            backend,
            tokenizer,
            context_window: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = Some(window);
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Number of backend calls issued so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        request.validate()?;
        let counted = self.tokenizer.count(&request.prompt);
        if let Some(window) = self.context_window {
            if counted > window {
                return Err(LlmError::ContextOverflow {
                    input_tokens: counted,
                    context_window: window,
                });
            }
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let completion = self.backend.complete(request)?;
        let input_tokens = completion.input_tokens.unwrap_or(counted);
        if let Some(window) = self.context_window {
            if input_tokens > window {
                return Err(LlmError::ContextOverflow {
                    input_tokens,
                    context_window: window,
                });
            }
        }
        let output_tokens = completion
            .output_tokens
            .unwrap_or_else(|| self.tokenizer.count(&completion.text));
        Ok(LlmResponse {
            text: completion.text,
            input_tokens,
            output_tokens,
            backend_id: self.backend.id().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Backend for Echo {
        fn id(&self) -> &str {
            "echo"
        }

        fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
            Ok(Completion::text(request.prompt.clone()))
        }
    }

    fn client() -> LlmClient {
        LlmClient::new(Arc::new(Echo), Tokenizer::Whitespace)
    }

    #[test]
    fn counts_are_recomputed_when_missing() {
        let r = client().complete(&LlmRequest::new("one two three", "t")).unwrap();
        assert_eq!((r.input_tokens, r.output_tokens), (3, 3));
        assert_eq!(r.backend_id, "echo");
    }

    #[test]
    fn context_overflow_before_any_call() {
        let c = client().with_context_window(100);
        let prompt = "word ".repeat(101);
        let err = c.complete(&LlmRequest::new(prompt, "t")).unwrap_err();
        assert_eq!(err, LlmError::ContextOverflow { input_tokens: 101, context_window: 100 });
        assert_eq!(c.calls(), 0);
        assert!(c.complete(&LlmRequest::new("word ".repeat(100), "t")).is_ok());
    }

    #[test]
    fn empty_prompt_is_invalid() {
        assert!(matches!(
            client().complete(&LlmRequest::new("", "t")),
            Err(LlmError::InvalidRequest(_))
        ));
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
