//! Stand-in sandbox speaking the JSON-lines protocol, answering from a file
//! of recorded executions. Useful when the real sandbox is not installed.
//!
//! ```text
//! pcomp-stub-sandbox --executions recorded.jsonl [--scene-dir DIR]
//! ```

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::Parser;
use pcomp_core::inference::{ExecutionStatus, Executor, RecordedExecutor, SandboxRequest, SandboxResponse};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    executions: PathBuf,
    /// Accepted for command-line compatibility with the real sandbox.
    #[arg(long)]
    scene_dir: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    let executor = match RecordedExecutor::load(&args.executions) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("pcomp-stub-sandbox: {e}");
            std::process::exit(1);
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<SandboxRequest>(&line) {
            Ok(request) => {
                let mut r = executor.execute(&request);
                if r.status == ExecutionStatus::SandboxUnavailable {
                    r = SandboxResponse::failed(ExecutionStatus::CodingError, r.stderr_tail);
                }
                r
            }
            Err(e) => {
                let mut r = SandboxResponse::failed(ExecutionStatus::CodingError, format!("malformed request: {e}"));
                r.protocol_error = true;
                r
            }
        };
        let json = serde_json::to_string(&response).expect("response serializes");
        if writeln!(out, "{json}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
