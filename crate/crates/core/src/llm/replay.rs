//! Offline replay of recorded or hand-written transcripts.
//!
//! Transcript files are JSON lines. Recorded lines carry the SHA-256 of the
//! exact prompt:
//!
//! ```text
//! {"hash":"<hex>","prompt_head":"<first 120 chars>","response":"..."}
//! ```
//!
//! Hand-written lines may instead carry `contains` (one substring or a list
//! that must all occur) and an optional `tag`. Pattern lines are consumed in
//! file order; once a prompt has been answered by a pattern it stays pinned
//! to that answer, so asking the same prompt again is still deterministic.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, prompt_head, Backend, Completion, LlmError, LlmRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pattern {
    One(String),
    All(Vec<String>),
}

impl Pattern {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Pattern::One(s) => prompt.contains(s.as_str()),
            Pattern::All(all) => all.iter().all(|s| prompt.contains(s.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_head: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<Pattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub response: String,
}

impl TranscriptLine {
    pub fn recorded(prompt: &str, response: impl Into<String>) -> Self {
        Self {
            hash: Some(prompt_hash(prompt)),
            prompt_head: Some(prompt_head(prompt)),
            contains: None,
            tag: None,
            response: response.into(),
        }
    }

    pub fn pattern(contains: Pattern, tag: Option<&str>, response: impl Into<String>) -> Self {
        Self {
            hash: None,
            prompt_head: None,
            contains: Some(contains),
            tag: tag.map(str::to_string),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone)]
struct PatternEntry {
    pattern: Pattern,
    tag: Option<String>,
    response: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayTranscript {
    exact: HashMap<String, String>,
    patterns: Vec<PatternEntry>,
}

impl ReplayTranscript {
    pub fn from_lines(lines: impl IntoIterator<Item = TranscriptLine>) -> Result<Self, LlmError> {
        let mut transcript = Self::default();
        for (n, line) in lines.into_iter().enumerate() {
            match (line.hash, line.contains) {
                (Some(hash), None) => {
                    if let Some(previous) = transcript.exact.get(&hash) {
                        if *previous != line.response {
                            return Err(LlmError::TranscriptLoadFailed(format!(
                                "entry {}: conflicting responses for hash {hash}",
                                n + 1
                            )));
                        }
                    }
                    transcript.exact.insert(hash, line.response);
                }
                (None, Some(pattern)) => transcript.patterns.push(PatternEntry {
                    pattern,
                    tag: line.tag,
                    response: line.response,
                }),
                _ => {
                    return Err(LlmError::TranscriptLoadFailed(format!(
                        "entry {}: exactly one of `hash` or `contains` is required",
                        n + 1
                    )))
                }
            }
        }
        Ok(transcript)
    }

    pub fn parse(jsonl: &str) -> Result<Self, LlmError> {
        let mut lines = Vec::new();
        for (n, raw) in jsonl.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: TranscriptLine = serde_json::from_str(raw)
                .map_err(|e| LlmError::TranscriptLoadFailed(format!("line {}: {e}", n + 1)))?;
            lines.push(line);
        }
        Self::from_lines(lines)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::TranscriptLoadFailed(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct ReplayState {
    consumed: Vec<bool>,
    pinned: HashMap<String, String>,
}

#[derive(Debug)]
pub struct ReplayBackend {
    id: String,
    transcript: ReplayTranscript,
    state: Mutex<ReplayState>,
}

impl ReplayBackend {
    pub fn new(transcript: ReplayTranscript) -> Self {
        Self::with_id("replay", transcript)
    }

    pub fn with_id(id: impl Into<String>, transcript: ReplayTranscript) -> Self {
        let consumed = vec![false; transcript.patterns.len()];
        Self {
            id: id.into(),
            transcript,
            state: Mutex::new(ReplayState {
                consumed,
                pinned: HashMap::new(),
            }),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::with_id(
            format!("replay:{}", path.file_name().and_then(|s| s.to_str()).unwrap_or("transcript")),
            ReplayTranscript::load(path)?,
        ))
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
        let hash = prompt_hash(&request.prompt);
        if let Some(response) = self.transcript.exact.get(&hash) {
            return Ok(Completion::text(response.clone()));
        }
        let mut state = self.state.lock().unwrap();
        if let Some(response) = state.pinned.get(&hash) {
            return Ok(Completion::text(response.clone()));
        }
        let found = self.transcript.patterns.iter().enumerate().find(|(i, entry)| {
            !state.consumed[*i]
                && entry.tag.as_deref().is_none_or(|t| t == request.tag)
                && entry.pattern.matches(&request.prompt)
        });
        match found {
            Some((i, entry)) => {
                state.consumed[i] = true;
                state.pinned.insert(hash, entry.response.clone());
                Ok(Completion::text(entry.response.clone()))
            }
            None => Err(LlmError::NoTranscriptMatch {
                hash,
                prompt_head: prompt_head(&request.prompt),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str, tag: &str) -> LlmRequest {
        LlmRequest::new(prompt, tag)
    }

    #[test]
    fn exact_hash_replay_is_stable() {
        let t = ReplayTranscript::from_lines([TranscriptLine::recorded("P", "R")]).unwrap();
        let b = ReplayBackend::new(t);
        for _ in 0..3 {
            assert_eq!(b.complete(&req("P", "x")).unwrap().text, "R");
        }
        assert!(matches!(b.complete(&req("Q", "x")), Err(LlmError::NoTranscriptMatch { .. })));
    }

    #[test]
    fn patterns_consume_in_order_and_pin() {
        let t = ReplayTranscript::from_lines([
            TranscriptLine::pattern(Pattern::One("foo".into()), None, "first"),
            TranscriptLine::pattern(Pattern::One("foo".into()), None, "second"),
        ])
        .unwrap();
        let b = ReplayBackend::new(t);
        assert_eq!(b.complete(&req("foo 1", "x")).unwrap().text, "first");
        assert_eq!(b.complete(&req("foo 2", "x")).unwrap().text, "second");
        assert_eq!(b.complete(&req("foo 1", "x")).unwrap().text, "first");
        assert!(b.complete(&req("foo 3", "x")).is_err());
    }

    #[test]
    fn pattern_tags_and_all_of_lists() {
        let t = ReplayTranscript::from_lines([
            TranscriptLine::pattern(Pattern::All(vec!["a".into(), "b".into()]), Some("gen"), "ab"),
        ])
        .unwrap();
        let b = ReplayBackend::new(t);
        assert!(b.complete(&req("a b", "classify")).is_err());
        assert!(b.complete(&req("a only", "gen")).is_err());
        assert_eq!(b.complete(&req("b then a", "gen")).unwrap().text, "ab");
    }

    #[test]
    fn conflicting_hash_entries_are_rejected() {
        let err = ReplayTranscript::from_lines([
            TranscriptLine::recorded("P", "R1"),
            TranscriptLine::recorded("P", "R2"),
        ])
        .unwrap_err();
        assert!(matches!(err, LlmError::TranscriptLoadFailed(_)));
    }

    #[test]
    fn parses_wire_format() {
        let line = format!(
            "{{\"hash\":\"{}\",\"prompt_head\":\"P\",\"response\":\"R\"}}\n\n{{\"contains\":[\"x\"],\"tag\":\"t\",\"response\":\"S\"}}\n",
            prompt_hash("P")
        );
        let t = ReplayTranscript::parse(&line).unwrap();
        assert_eq!(t.len(), 2);
        assert!(ReplayTranscript::parse("{not json").is_err());
        assert!(ReplayTranscript::parse("{\"response\":\"R\"}").is_err());
    }
}
