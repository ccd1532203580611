use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::replay::TranscriptLine;
use super::{prompt_hash, Backend, Completion, LlmError, LlmRequest};

/// Forwards to a wrapped backend and appends each new (prompt hash,
/// response) pair to a JSON-lines transcript that [`ReplayBackend`] can
/// replay later. A hash already present in the file is not written twice.
///
/// [`ReplayBackend`]: super::ReplayBackend
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    id: String,
    path: PathBuf,
    sink: Mutex<(File, HashSet<String>)>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, path: &Path) -> Result<Self, LlmError> {
        let fail = |e: std::io::Error| LlmError::TranscriptWriteFailed(format!("{}: {e}", path.display()));
        let mut seen = HashSet::new();
        if path.exists() {
            let existing = File::open(path).map_err(fail)?;
            for line in BufReader::new(existing).lines() {
                let line = line.map_err(fail)?;
                if let Ok(TranscriptLine { hash: Some(hash), .. }) = serde_json::from_str(&line) {
                    seen.insert(hash);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(fail)?;
        Ok(Self {
            id: format!("record({})", inner.id()),
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new((file, seen)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Backend for RecordingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(request)?;
        let hash = prompt_hash(&request.prompt);
        let mut sink = self.sink.lock().unwrap();
        if sink.1.insert(hash) {
            let line = TranscriptLine::recorded(&request.prompt, completion.text.clone());
            let json = serde_json::to_string(&line).expect("transcript line serializes");
            writeln!(sink.0, "{json}")
                .and_then(|_| sink.0.flush())
                .map_err(|e| LlmError::TranscriptWriteFailed(format!("{}: {e}", self.path.display())))?;
        }
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ReplayBackend, ReplayTranscript};

    struct Upper;

    impl Backend for Upper {
        fn id(&self) -> &str {
            "upper"
        }

        fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
            Ok(Completion::text(request.prompt.to_uppercase()))
        }
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let rec = RecordingBackend::new(Arc::new(Upper), &path).unwrap();
        let prompts = ["alpha", "beta", "gamma", "alpha"];
        let live: Vec<_> = prompts
            .iter()
            .map(|p| rec.complete(&LlmRequest::new(*p, "t")).unwrap().text)
            .collect();
        drop(rec);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3, "duplicate prompt recorded once");

        let replay = ReplayBackend::new(ReplayTranscript::load(&path).unwrap());
        for (p, expected) in prompts.iter().zip(&live) {
            assert_eq!(&replay.complete(&LlmRequest::new(*p, "t")).unwrap().text, expected);
        }
        let altered = replay.complete(&LlmRequest::new("alphb", "t"));
        assert!(matches!(altered, Err(LlmError::NoTranscriptMatch { .. })));
    }

    #[test]
    fn unwritable_path_fails() {
        let err = RecordingBackend::new(Arc::new(Upper), Path::new("/nonexistent/dir/t.jsonl")).err().unwrap();
        assert!(matches!(err, LlmError::TranscriptWriteFailed(_)));
    }
}
