//! Program execution behind the sandbox's JSON-lines protocol.
//!
//! Each request is one line of JSON on the sandbox's stdin; each response is
//! one line on its stdout. The sandbox itself lives in a separate process;
//! this module holds the wire types, a pooled subprocess client and a stub
//! that serves recorded responses so the pipeline runs without a sandbox.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::llm::{prompt_hash, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    CodingError,
    Timeout,
    SandboxUnavailable,
}

impl std::fmt::Display for ExecutionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExecutionStatus::Ok => "ok",
            ExecutionStatus::CodingError => "coding_error",
            ExecutionStatus::Timeout => "timeout",
            ExecutionStatus::SandboxUnavailable => "sandbox_unavailable",
        })
    }
}

/// One stubbed API call observed while the program ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub name: String,
    #[serde(default)]
    pub args: String,
    #[serde(default)]
    pub result: String,
}

impl TraceEvent {
    /// True for a `find` call that detected nothing (`[]` or a zero count).
    pub fn is_empty_find(&self) -> bool {
        if self.name != "find" {
            return false;
        }
        let r = self.result.trim();
        r == "[]" || r == "0" || r.starts_with("0 ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    /// `[left, lower, right, upper]` in pixels, origin bottom-left.
    pub bbox: [f64; 4],
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub depth: f64,
}

/// Deterministic stand-in for an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFixture {
    pub scene_id: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub query_overrides: BTreeMap<String, String>,
    #[serde(default)]
    pub global_facts: BTreeMap<String, String>,
}

impl SceneFixture {
    pub fn validate(&self) -> Result<(), String> {
        for o in &self.objects {
            let [left, lower, right, upper] = o.bbox;
            if o.name.trim().is_empty() {
                return Err(format!("scene {}: object with empty name", self.scene_id));
            }
            if !(0.0 <= left && left < right && right <= self.width && 0.0 <= lower && lower < upper && upper <= self.height) {
                return Err(format!("scene {}: object `{}` has bbox outside the scene", self.scene_id, o.name));
            }
        }
        Ok(())
    }

    pub fn load(scene_dir: &Path, scene_id: &str) -> Result<Self, String> {
        let path = scene_dir.join(format!("{scene_id}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let scene: SceneFixture = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        scene.validate()?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Id(String),
    Inline(Box<SceneFixture>),
}

impl SceneRef {
    pub fn id(&self) -> &str {
        match self {
            SceneRef::Id(id) => id,
            SceneRef::Inline(s) => &s.scene_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxRequest {
    pub program: String,
    pub entry_point: String,
    pub scene: SceneRef,
    pub time_limit_ms: u64,
    pub memory_limit_mb: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxResponse {
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub trace: Vec<TraceEvent>,
    #[serde(default)]
    pub stderr_tail: String,
    /// Set when the request line itself could not be understood.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub protocol_error: bool,
}

impl SandboxResponse {
    pub fn ok(answer: impl Into<String>) -> Self {
        Self {
            status: ExecutionStatus::Ok,
            answer: Some(answer.into()),
            trace: Vec::new(),
            stderr_tail: String::new(),
            protocol_error: false,
        }
    }

    pub fn failed(status: ExecutionStatus, detail: impl Into<String>) -> Self {
        Self {
            status,
            answer: None,
            trace: Vec::new(),
            stderr_tail: detail.into(),
            protocol_error: false,
        }
    }

    /// Drops an answer that came with a non-ok status and fills a missing
    /// one on success, so `answer.is_some() == (status == Ok)` holds.
    pub fn normalized(mut self) -> Self {
        match self.status {
            ExecutionStatus::Ok => {
                if self.answer.is_none() {
                    self.answer = Some(String::new());
                }
            }
            _ => self.answer = None,
        }
        self
    }
}

pub trait Executor: Send + Sync {
    fn id(&self) -> &str;
    fn execute(&self, request: &SandboxRequest) -> SandboxResponse;
}

/// Used when execution is disabled or no sandbox is configured.
#[derive(Debug, Default)]
pub struct UnavailableExecutor;

impl Executor for UnavailableExecutor {
    fn id(&self) -> &str {
        "none"
    }

    fn execute(&self, _request: &SandboxRequest) -> SandboxResponse {
        SandboxResponse::failed(ExecutionStatus::SandboxUnavailable, "no sandbox configured")
    }
}

/// One line of a recorded-execution file.
///
/// ```text
/// {"scene":"s1","hash":"<sha256 of program>","response":{"status":"ok","answer":"yes"}}
/// {"scene":"s1","contains":["find(\"cat\")"],"response":{...}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExecution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<Pattern>,
    pub response: SandboxResponse,
}

impl RecordedExecution {
    fn matches(&self, request: &SandboxRequest, hash: &str) -> bool {
        if self.scene.as_deref().is_some_and(|s| s != request.scene.id()) {
            return false;
        }
        match (&self.hash, &self.contains) {
            (Some(h), _) => h == hash,
            (None, Some(Pattern::One(s))) => request.program.contains(s.as_str()),
            (None, Some(Pattern::All(all))) => all.iter().all(|s| request.program.contains(s.as_str())),
            (None, None) => true,
        }
    }
}

/// Serves recorded responses; the first matching entry wins. Programs with
/// no entry come back as `sandbox_unavailable`.
#[derive(Debug, Clone, Default)]
pub struct RecordedExecutor {
    entries: Vec<RecordedExecution>,
}

impl RecordedExecutor {
    pub fn new(entries: Vec<RecordedExecution>) -> Self {
        Self { entries }
    }

    pub fn parse(jsonl: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (n, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordedExecution = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

impl Executor for RecordedExecutor {
    fn id(&self) -> &str {
        "recorded"
    }

    fn execute(&self, request: &SandboxRequest) -> SandboxResponse {
        let hash = prompt_hash(&request.program);
        match self.entries.iter().find(|e| e.matches(request, &hash)) {
            Some(entry) => entry.response.clone().normalized(),
            None => SandboxResponse::failed(ExecutionStatus::SandboxUnavailable, "no recorded execution for program"),
        }
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Worker {
    fn spawn(command: &[String]) -> std::io::Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty sandbox command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Pool of long-lived sandbox child processes, one per concurrent caller.
///
/// The sandbox enforces its own time limit; as a backstop the client kills
/// a child that has not answered within twice the limit plus `grace`.
pub struct SubprocessExecutor {
    command: Vec<String>,
    idle: Mutex<Vec<Worker>>,
    grace: Duration,
}

impl std::fmt::Debug for SubprocessExecutor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessExecutor").field("command", &self.command).finish()
    }
}

impl SubprocessExecutor {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            idle: Mutex::new(Vec::new()),
            grace: Duration::from_millis(1000),
        }
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    fn checkout(&self) -> std::io::Result<Worker> {
        if let Some(w) = self.idle.lock().unwrap().pop() {
            return Ok(w);
        }
        Worker::spawn(&self.command)
    }
}

impl Executor for SubprocessExecutor {
    fn id(&self) -> &str {
        "subprocess"
    }

    fn execute(&self, request: &SandboxRequest) -> SandboxResponse {
        let mut worker = match self.checkout() {
            Ok(w) => w,
            Err(e) => return SandboxResponse::failed(ExecutionStatus::SandboxUnavailable, format!("spawn failed: {e}")),
        };
        let line = serde_json::to_string(request).expect("request serializes");
        if writeln!(worker.stdin, "{line}").and_then(|_| worker.stdin.flush()).is_err() {
            worker.kill();
            return SandboxResponse::failed(ExecutionStatus::SandboxUnavailable, "sandbox closed its input");
        }
        let deadline = Duration::from_millis(request.time_limit_ms.saturating_mul(2)) + self.grace;
        match worker.lines.recv_timeout(deadline) {
            Ok(reply) => {
                let response = match serde_json::from_str::<SandboxResponse>(&reply) {
                    Ok(r) => r.normalized(),
                    Err(e) => {
                        let mut r = SandboxResponse::failed(ExecutionStatus::CodingError, format!("unreadable sandbox reply: {e}"));
                        r.protocol_error = true;
                        r
                    }
                };
                self.idle.lock().unwrap().push(worker);
                response
            }
            Err(RecvTimeoutError::Timeout) => {
                worker.kill();
                SandboxResponse::failed(ExecutionStatus::Timeout, "sandbox did not answer before the deadline")
            }
            Err(RecvTimeoutError::Disconnected) => {
                worker.kill();
                SandboxResponse::failed(ExecutionStatus::SandboxUnavailable, "sandbox exited")
            }
        }
    }
}

impl Drop for SubprocessExecutor {
    fn drop(&mut self) {
        for w in self.idle.lock().unwrap().drain(..) {
            drop(w.stdin);
            let mut child = w.child;
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(program: &str) -> SandboxRequest {
        SandboxRequest {
            program: program.into(),
            entry_point: "execute_command".into(),
            scene: SceneRef::Id("s1".into()),
            time_limit_ms: 200,
            memory_limit_mb: 256,
        }
    }

    #[test]
    fn wire_format() {
        let json = serde_json::to_value(request("p")).unwrap();
        assert_eq!(json["scene"], "s1");
        assert_eq!(json["entry_point"], "execute_command");
        let r: SandboxResponse = serde_json::from_str(r#"{"status":"ok","answer":"yes","trace":[{"name":"find","args":"cat","result":"[]"}]}"#).unwrap();
        assert!(r.trace[0].is_empty_find());
        assert_eq!(r.stderr_tail, "");
    }

    #[test]
    fn recorded_matching() {
        let program = "def execute_command(image):\n    return bool_to_yesno(True)";
        let exec = RecordedExecutor::parse(&format!(
            "{{\"scene\":\"s1\",\"hash\":\"{}\",\"response\":{{\"status\":\"ok\",\"answer\":\"yes\"}}}}\n{{\"contains\":\"loop\",\"response\":{{\"status\":\"timeout\",\"answer\":\"x\"}}}}",
            prompt_hash(program)
        ))
        .unwrap();
        assert_eq!(exec.execute(&request(program)).answer.as_deref(), Some("yes"));
        let timeout = exec.execute(&request("while loop"));
        assert_eq!((timeout.status, timeout.answer), (ExecutionStatus::Timeout, None));
        assert_eq!(exec.execute(&request("other")).status, ExecutionStatus::SandboxUnavailable);
    }

    #[test]
    fn scene_bbox_validation() {
        let mut scene = SceneFixture {
            scene_id: "s".into(),
            width: 100.0,
            height: 50.0,
            objects: vec![SceneObject {
                name: "cat".into(),
                bbox: [10.0, 10.0, 60.0, 40.0],
                attributes: BTreeMap::new(),
                depth: 1.0,
            }],
            query_overrides: BTreeMap::new(),
            global_facts: BTreeMap::new(),
        };
        assert!(scene.validate().is_ok());
        scene.objects[0].bbox = [10.0, 10.0, 160.0, 40.0];
        assert!(scene.validate().is_err());
    }

    #[test]
    fn missing_sandbox_binary_is_unavailable() {
        let exec = SubprocessExecutor::new(vec!["/nonexistent/sandbox".into()]);
        assert_eq!(exec.execute(&request("p")).status, ExecutionStatus::SandboxUnavailable);
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_round_trip_and_timeout() {
        // Answers the first request, then hangs on the second.
        let exec = SubprocessExecutor::new(vec!["sh".into(), "-c".into(), "read l; echo '{\"status\":\"ok\",\"answer\":\"42\"}'; read l; sleep 5".into()])
            .with_grace(Duration::from_millis(50));
        let first = exec.execute(&request("p"));
        assert_eq!(first.answer.as_deref(), Some("42"));
        let started = std::time::Instant::now();
        let second = exec.execute(&request("p"));
        assert_eq!(second.status, ExecutionStatus::Timeout);
        assert!(started.elapsed() < Duration::from_millis(2 * 200 + 500));
    }
}
