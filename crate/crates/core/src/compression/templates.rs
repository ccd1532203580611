//! Instruction templates for both phases.
//!
//! The snippet-specialisation template carries a `{type_definition}`
//! placeholder; the classification template repeats every line that holds
//! `{type[i]}` or `{type_definition[i]}` once per catalog entry.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::catalog::QuestionTypeCatalog;

pub const TYPE_DEFINITION: &str = "{type_definition}";
pub const TYPE_NAME_I: &str = "{type[i]}";
pub const TYPE_DEFINITION_I: &str = "{type_definition[i]}";
pub const BUILTIN_VERSION: &str = "builtin-reconstruction-1";

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*(?:\[i\])?\}").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{0}` is missing")]
    TemplateMissing(String),
    #[error("template `{template}` has unresolved placeholder {placeholder}")]
    UnresolvedPlaceholder { template: String, placeholder: String },
    #[error("template `{0}` must contain the {TYPE_DEFINITION} placeholder exactly once")]
    PlaceholderCount(String),
    #[error("question type definition is empty")]
    EmptyDefinition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    /// Instruction to rewrite the API definitions.
    pub rewrite: String,
    /// Instruction to write example snippets.
    pub snippets: String,
    /// Addendum specialising snippets to one question type.
    pub specialize: String,
    /// Classification prompt with per-type placeholder lines.
    pub classify: String,
    pub version: String,
}

/// File paths for the four templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePaths {
    pub rewrite: std::path::PathBuf,
    pub snippets: std::path::PathBuf,
    pub specialize: std::path::PathBuf,
    pub classify: std::path::PathBuf,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            rewrite: include_str!("../../../../fixtures/templates/rewrite_definitions.txt").to_string(),
            snippets: include_str!("../../../../fixtures/templates/write_snippets.txt").to_string(),
            specialize: include_str!("../../../../fixtures/templates/specialize_snippets.txt").to_string(),
            classify: include_str!("../../../../fixtures/templates/classify_question.txt").to_string(),
            version: BUILTIN_VERSION.to_string(),
        }
    }

    pub fn load(paths: &TemplatePaths) -> Result<Self, TemplateError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|_| TemplateError::TemplateMissing(p.display().to_string()))
        };
        let mut t = Self {
            rewrite: read(&paths.rewrite)?,
            snippets: read(&paths.snippets)?,
            specialize: read(&paths.specialize)?,
            classify: read(&paths.classify)?,
            version: String::new(),
        };
        t.version = if t.same_text(&Self::builtin()) {
            BUILTIN_VERSION.to_string()
        } else {
            t.content_version()
        };
        Ok(t)
    }

    fn same_text(&self, other: &Self) -> bool {
        self.rewrite == other.rewrite
            && self.snippets == other.snippets
            && self.specialize == other.specialize
            && self.classify == other.classify
    }

    fn content_version(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.rewrite, &self.snippets, &self.specialize, &self.classify] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        format!("sha256:{}", &hex::encode(h.finalize())[..16])
    }

    /// The definition-rewrite instruction, verbatim.
    pub fn render_rewrite_instruction(&self) -> Result<String, TemplateError> {
        non_empty("rewrite", &self.rewrite)?;
        check_resolved("rewrite", &self.rewrite)?;
        Ok(self.rewrite.clone())
    }

    /// Snippet instruction without type specialisation.
    pub fn render_generic_snippet_instruction(&self) -> Result<String, TemplateError> {
        non_empty("snippets", &self.snippets)?;
        check_resolved("snippets", &self.snippets)?;
        Ok(self.snippets.clone())
    }

    /// Snippet instruction followed by the specialisation addendum with the
    /// type definition substituted in.
    pub fn render_snippet_instruction(&self, type_definition: &str) -> Result<String, TemplateError> {
        if type_definition.trim().is_empty() {
            return Err(TemplateError::EmptyDefinition);
        }
        let base = self.render_generic_snippet_instruction()?;
        non_empty("specialize", &self.specialize)?;
        if self.specialize.matches(TYPE_DEFINITION).count() != 1 {
            return Err(TemplateError::PlaceholderCount("specialize".into()));
        }
        let (before, after) = self.specialize.split_once(TYPE_DEFINITION).expect("counted above");
        check_resolved("specialize", before)?;
        check_resolved("specialize", after)?;
        Ok(format!("{base}{before}{type_definition}{after}"))
    }

    /// Classification prompt with one line per catalog entry, in order.
    pub fn render_classification_prompt(&self, catalog: &QuestionTypeCatalog) -> Result<String, TemplateError> {
        non_empty("classify", &self.classify)?;
        let mut out = String::with_capacity(self.classify.len() * 2);
        for line in self.classify.split_inclusive('\n') {
            if line.contains(TYPE_NAME_I) || line.contains(TYPE_DEFINITION_I) {
                for t in catalog.types() {
                    // substitute both placeholders in a single pass so a
                    // definition containing placeholder text is left alone
                    let mut rest = line;
                    while let Some(pos) = [TYPE_NAME_I, TYPE_DEFINITION_I]
                        .iter()
                        .filter_map(|p| rest.find(p).map(|i| (i, *p)))
                        .min()
                    {
                        let (i, p) = pos;
                        check_resolved("classify", &rest[..i])?;
                        out.push_str(&rest[..i]);
                        out.push_str(if p == TYPE_NAME_I { &t.name } else { &t.definition });
                        rest = &rest[i + p.len()..];
                    }
                    check_resolved("classify", rest)?;
                    out.push_str(rest);
                }
            } else {
                check_resolved("classify", line)?;
                out.push_str(line);
            }
        }
        Ok(out)
    }
}

fn non_empty(name: &str, text: &str) -> Result<(), TemplateError> {
    if text.trim().is_empty() {
        Err(TemplateError::TemplateMissing(name.to_string()))
    } else {
        Ok(())
    }
}

fn check_resolved(name: &str, text: &str) -> Result<(), TemplateError> {
    match PLACEHOLDER.find(text) {
        Some(m) => Err(TemplateError::UnresolvedPlaceholder {
            template: name.to_string(),
            placeholder: m.as_str().to_string(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> QuestionTypeCatalog {
        QuestionTypeCatalog::from_pairs([
            ("obj", "question asking existence of object."),
            ("global", "question about the scene (e.g. \"Is it foo?\")."),
        ])
        .unwrap()
    }

    #[test]
    fn rewrite_is_verbatim() {
        let t = Templates::builtin();
        assert_eq!(
            t.render_rewrite_instruction().unwrap(),
            include_str!("../../../../fixtures/templates/rewrite_definitions.txt")
        );
    }

    #[test]
    fn stray_placeholder_is_rejected() {
        let mut t = Templates::builtin();
        t.rewrite.push_str("Use {placeholder} here.");
        assert!(matches!(
            t.render_rewrite_instruction(),
            Err(TemplateError::UnresolvedPlaceholder { .. })
        ));
    }

    #[test]
    fn snippet_instruction_substitutes_only_the_placeholder() {
        let t = Templates::builtin();
        let d = "question asking existence of object.";
        let out = t.render_snippet_instruction(d).unwrap();
        assert!(out.contains(d));
        assert_eq!(out.len(), t.snippets.len() + t.specialize.len() - TYPE_DEFINITION.len() + d.len());
        assert_eq!(t.render_snippet_instruction(""), Err(TemplateError::EmptyDefinition));
    }

    #[test]
    fn classification_expands_in_catalog_order() {
        let t = Templates::builtin();
        let out = t.render_classification_prompt(&catalog()).unwrap();
        let obj = out.find("obj: question asking existence").unwrap();
        let global = out.find("global: question about the scene").unwrap();
        assert!(obj < global);
        assert!(!out.contains("{type"));
        assert!(out.contains("only the name"));
    }

    #[test]
    fn single_type_catalog_yields_one_line() {
        let t = Templates::builtin();
        let one = QuestionTypeCatalog::from_pairs([("attr", "attributes.")]).unwrap();
        let out = t.render_classification_prompt(&one).unwrap();
        assert_eq!(out.lines().filter(|l| l.starts_with("attr: ")).count(), 1);
        assert_eq!(out.lines().count(), t.classify.lines().count());
    }

    #[test]
    fn missing_file_is_template_missing() {
        let paths = TemplatePaths {
            rewrite: "/nope/a".into(),
            snippets: "/nope/b".into(),
            specialize: "/nope/c".into(),
            classify: "/nope/d".into(),
        };
        assert!(matches!(Templates::load(&paths), Err(TemplateError::TemplateMissing(_))));
    }
}
