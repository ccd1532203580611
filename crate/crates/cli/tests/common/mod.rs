#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use pcomp::{run, Cli, CliError};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

pub fn gqa(rel: &str) -> PathBuf {
    fixtures().join("gqa").join(rel)
}

/// A scratch directory holding a config that reads the GQA fixtures and
/// writes every output inside the directory.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(transcript: &str) -> Self {
        Self::with_extra(transcript, "")
    }

    pub fn with_extra(transcript: &str, extra_paths: &str) -> Self {
        Self::with_sections(transcript, extra_paths, "")
    }

    pub fn with_sections(transcript: &str, extra_paths: &str, tail: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = fixtures();
        let text = format!(
            r#"
[tokenizer]
kind = "bpe"
vocab = "{tok}"

[preprompt]
definitions = "{pre}/api_definitions.py"
snippets = "{pre}/snippets.json"
instruction = "{pre}/instruction.txt"

[paths]
catalog = "{g}/catalog.json"
compressed_set = "out/compressed_set.json"
dataset = "{g}/dataset.jsonl"
scene_dir = "{g}/scenes"
transcript = "{g}/{transcript}"
output_dir = "out"
{extra_paths}

[run]
mode = "adaptive"
seed = 7
workers = 4
fallback_type = "attr"

[compression]
required_api_names = "image_patch"
{tail}
"#,
            tok = f.join("tokenizer/cl100k_base.tiktoken").display(),
            pre = f.join("preprompt").display(),
            g = f.join("gqa").display(),
        );
        std::fs::write(dir.path().join("pcomp.toml"), text).unwrap();
        Self { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn run(&self, args: &[&str]) -> (Result<(), CliError>, String) {
        let config = self.path("pcomp.toml");
        let mut argv = vec!["pcomp".to_string(), "--config".into(), config.display().to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        let cli = Cli::try_parse_from(argv).unwrap();
        let mut out = Vec::new();
        let r = run(&cli, &mut out);
        (r, String::from_utf8(out).unwrap())
    }

    pub fn compress(&self) {
        let (r, _) = self.run(&["compress"]);
        r.unwrap();
    }
}

pub fn executions_line(extra: &str) -> String {
    format!("executions = \"{}\"\n{extra}", gqa("executions.jsonl").display())
}
