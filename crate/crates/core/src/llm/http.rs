//! Live backends speaking either the chat-completions or the messages wire
//! dialect.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::clock::{Clock, RateLimiter, SystemClock};
use super::{Backend, Completion, LlmError, LlmRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `POST {base}/chat/completions`, bearer auth.
    ChatCompletions,
    /// `POST {base}/messages`, `x-api-key` auth.
    Messages,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub dialect: Dialect,
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
    pub requests_per_minute: Option<usize>,
}

impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("dialect", &self.dialect)
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_attempts", &self.max_attempts)
            .finish()
    }
}

impl HttpConfig {
    pub fn new(dialect: Dialect, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            dialect,
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            max_attempts: 4,
            initial_backoff_ms: 500,
            timeout_ms: 120_000,
            requests_per_minute: None,
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    client: reqwest::blocking::Client,
    limiter: Option<RateLimiter>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("id", &self.id).field("config", &self.config).finish()
    }
}

enum Failure {
    Retryable(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        Self::with_clock(config, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(config: HttpConfig, clock: Arc<dyn Clock>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("http client: {e}")))?;
        let limiter = config
            .requests_per_minute
            .map(|rpm| RateLimiter::new(rpm, clock.clone()));
        let dialect = match config.dialect {
            Dialect::ChatCompletions => "chat",
            Dialect::Messages => "messages",
        };
        Ok(Self {
            id: format!("{dialect}:{}", config.model),
            config,
            client,
            limiter,
            clock,
        })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.dialect {
            Dialect::ChatCompletions => format!("{base}/chat/completions"),
            Dialect::Messages => format!("{base}/messages"),
        }
    }

    fn body(&self, request: &LlmRequest) -> Value {
        let messages = json!([{ "role": "user", "content": request.prompt }]);
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        if !request.stop_sequences.is_empty() {
            let key = match self.config.dialect {
                Dialect::ChatCompletions => "stop",
                Dialect::Messages => "stop_sequences",
            };
            body[key] = json!(request.stop_sequences);
        }
        body
    }

    fn attempt(&self, request: &LlmRequest) -> Result<Completion, Failure> {
        let mut builder = self.client.post(self.endpoint()).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            builder = match self.config.dialect {
                Dialect::ChatCompletions => builder.bearer_auth(key),
                Dialect::Messages => builder.header("x-api-key", key).header("anthropic-version", "2023-06-01"),
            };
        }
        let response = builder.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(LlmError::BackendRejected {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            }));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Retryable(format!("unparseable response body: {e}")))?;
        parse_completion(self.config.dialect, &value).ok_or_else(|| {
            Failure::Retryable(format!("response missing completion text: {}", text.chars().take(200).collect::<String>()))
        })
    }
}

fn parse_completion(dialect: Dialect, value: &Value) -> Option<Completion> {
    let count = |v: &Value| v.as_u64().map(|n| n as usize);
    match dialect {
        Dialect::ChatCompletions => {
            let text = value["choices"][0]["message"]["content"].as_str()?.to_string();
            Some(Completion {
                text,
                input_tokens: count(&value["usage"]["prompt_tokens"]),
                output_tokens: count(&value["usage"]["completion_tokens"]),
            })
        }
        Dialect::Messages => {
            let blocks = value["content"].as_array()?;
            let text = blocks
                .iter()
                .filter(|b| b["type"] == "text")
                .filter_map(|b| b["text"].as_str())
                .collect::<String>();
            Some(Completion {
                text,
                input_tokens: count(&value["usage"]["input_tokens"]),
                output_tokens: count(&value["usage"]["output_tokens"]),
            })
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<Completion, LlmError> {
        let attempts = self.config.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.attempt(request) {
                Ok(completion) => return Ok(completion),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => {
                    tracing::warn!(backend = %self.id, attempt, error = %e, "llm call failed");
                    last_error = e;
                }
            }
            if attempt < attempts {
                let backoff = self.config.initial_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                self.clock.sleep(Duration::from_millis(backoff));
            }
        }
        Err(LlmError::BackendUnreachable { attempts, last_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::FakeClock;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the given (status, body) pairs in order and reports each
    /// request's head and body.
    fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line.to_ascii_lowercase().starts_with("content-length:") {
                        length = line[15..].trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                tx.send((head, String::from_utf8(buf).unwrap())).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (addr, rx)
    }

    fn backend(dialect: Dialect, base: &str, clock: Arc<FakeClock>) -> HttpBackend {
        let mut config = HttpConfig::new(dialect, base, "m");
        config.api_key = Some("sk-test".into());
        config.max_attempts = 3;
        config.initial_backoff_ms = 100;
        HttpBackend::with_clock(config, clock).unwrap()
    }

    #[test]
    fn chat_dialect_round_trip() {
        let body = r#"{"choices":[{"message":{"content":"attr"}}],"usage":{"prompt_tokens":12,"completion_tokens":1}}"#;
        let (base, rx) = serve(vec![(200, body.into())]);
        let b = backend(Dialect::ChatCompletions, &base, Arc::new(FakeClock::new()));
        let c = b.complete(&LlmRequest::new("hello", "classify").with_stop("\n")).unwrap();
        assert_eq!(c, Completion { text: "attr".into(), input_tokens: Some(12), output_tokens: Some(1) });
        let (head, sent) = rx.recv().unwrap();
        assert!(head.starts_with("POST /chat/completions"));
        assert!(head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let sent: Value = serde_json::from_str(&sent).unwrap();
        assert_eq!(sent["messages"][0]["content"], "hello");
        assert_eq!(sent["stop"][0], "\n");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn messages_dialect_round_trip() {
        let body = r#"{"content":[{"type":"text","text":"def execute_command"}],"usage":{"input_tokens":5,"output_tokens":3}}"#;
        let (base, rx) = serve(vec![(200, body.into())]);
        let b = backend(Dialect::Messages, &base, Arc::new(FakeClock::new()));
        let c = b.complete(&LlmRequest::new("hi", "generate")).unwrap();
        assert_eq!(c.text, "def execute_command");
        assert_eq!(c.output_tokens, Some(3));
        let (head, _) = rx.recv().unwrap();
        assert!(head.starts_with("POST /messages"));
        assert!(head.to_ascii_lowercase().contains("x-api-key: sk-test"));
    }

    #[test]
    fn retries_with_exponential_backoff() {
        let ok = r#"{"choices":[{"message":{"content":"x"}}]}"#;
        let (base, _rx) = serve(vec![(500, "{}".into()), (429, "{}".into()), (200, ok.into())]);
        let clock = Arc::new(FakeClock::new());
        let b = backend(Dialect::ChatCompletions, &base, clock.clone());
        assert_eq!(b.complete(&LlmRequest::new("p", "t")).unwrap().text, "x");
        assert_eq!(clock.sleeps(), [Duration::from_millis(100), Duration::from_millis(200)]);
    }

    #[test]
    fn unreachable_after_attempts_exhausted() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        let clock = Arc::new(FakeClock::new());
        let b = backend(Dialect::ChatCompletions, &base, clock.clone());
        let err = b.complete(&LlmRequest::new("p", "t")).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnreachable { attempts: 3, .. }));
        assert_eq!(clock.sleeps().len(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (base, _rx) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let b = backend(Dialect::ChatCompletions, &base, Arc::new(FakeClock::new()));
        let err = b.complete(&LlmRequest::new("p", "t")).unwrap_err();
        assert!(matches!(err, LlmError::BackendRejected { status: 400, .. }));
    }

    #[test]
    fn debug_output_redacts_key() {
        let mut config = HttpConfig::new(Dialect::Messages, "http://x", "m");
        config.api_key = Some("sk-secret".into());
        assert!(!format!("{config:?}").contains("sk-secret"));
        assert!(!serde_json::to_string(&config).unwrap().contains("sk-secret"));
    }
}
