//! Structural aggregation: splice snippets, as comments, right after the
//! definition each one exercises, then append the coding instruction.

use std::ops::Range;

use super::definitions::ApiDefinitionIndex;
use super::snippets::{Snippet, SnippetBundle};

pub const DEFAULT_COMMENT_PREFIX: &str = "#";

/// Where one snippet landed in the aggregated text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub snippet_id: String,
    /// Byte range of the rendered comment block in the output.
    pub range: Range<usize>,
    /// Index of the definition block the snippet follows; `None` for the
    /// trailing section.
    pub block: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregation {
    pub text: String,
    pub insertions: Vec<Insertion>,
    /// Length of the prefix holding the definitions and inline insertions.
    pub definitions_end: usize,
    pub instruction: Range<usize>,
}

impl Aggregation {
    /// The original definition text, recovered by cutting every inline
    /// insertion out of the definitions prefix.
    pub fn strip(&self) -> String {
        let mut out = String::with_capacity(self.definitions_end);
        let mut cursor = 0;
        let mut inline: Vec<&Insertion> = self.insertions.iter().filter(|i| i.block.is_some()).collect();
        inline.sort_by_key(|i| i.range.start);
        for ins in inline {
            out.push_str(&self.text[cursor..ins.range.start]);
            cursor = ins.range.end;
        }
        out.push_str(&self.text[cursor..self.definitions_end]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregator {
    comment_prefix: String,
}

impl Default for Aggregator {
    fn default() -> Self {
        Self::new(DEFAULT_COMMENT_PREFIX)
    }
}

impl Aggregator {
    pub fn new(comment_prefix: impl Into<String>) -> Self {
        Self {
            comment_prefix: comment_prefix.into(),
        }
    }

    pub fn comment_prefix(&self) -> &str {
        &self.comment_prefix
    }

    pub fn aggregate(&self, defs: &ApiDefinitionIndex, instruction: &str, snippets: &SnippetBundle) -> String {
        self.aggregate_detailed(defs, instruction, snippets).text
    }

    pub fn aggregate_detailed(
        &self,
        defs: &ApiDefinitionIndex,
        instruction: &str,
        snippets: &SnippetBundle,
    ) -> Aggregation {
        let source = defs.source_text();

        // Group snippets by target block, preserving bundle order.
        let mut per_block: Vec<Vec<&Snippet>> = vec![Vec::new(); defs.blocks().len()];
        let mut trailing: Vec<&Snippet> = Vec::new();
        for snippet in snippets.snippets() {
            match snippet.anchors.first().and_then(|a| defs.callable(a)) {
                Some((idx, _)) => per_block[idx].push(snippet),
                None => trailing.push(snippet),
            }
        }

        let mut text = String::with_capacity(source.len() + instruction.len() + 256);
        let mut insertions = Vec::new();
        let mut cursor = 0;
        for (idx, block) in defs.blocks().iter().enumerate() {
            if per_block[idx].is_empty() {
                continue;
            }
            let at = block.span.end;
            text.push_str(&source[cursor..at]);
            cursor = at;
            let indent = leading_whitespace(&source[block.span.start..]);
            for snippet in &per_block[idx] {
                let start = text.len();
                if !text.is_empty() && !text.ends_with('\n') {
                    text.push('\n');
                }
                self.render_comment(&mut text, indent, &snippet.code);
                insertions.push(Insertion {
                    snippet_id: snippet.id.clone(),
                    range: start..text.len(),
                    block: Some(idx),
                });
            }
        }
        text.push_str(&source[cursor..]);
        let definitions_end = text.len();

        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        if !trailing.is_empty() {
            text.push('\n');
            for snippet in trailing {
                let start = text.len();
                self.render_comment(&mut text, "", &snippet.code);
                insertions.push(Insertion {
                    snippet_id: snippet.id.clone(),
                    range: start..text.len(),
                    block: None,
                });
            }
        }
        text.push('\n');
        let instruction_start = text.len();
        text.push_str(instruction);

        Aggregation {
            instruction: instruction_start..text.len(),
            text,
            insertions,
            definitions_end,
        }
    }

    fn render_comment(&self, out: &mut String, indent: &str, code: &str) {
        for line in code.trim_end_matches('\n').lines() {
            out.push_str(indent);
            out.push_str(&self.comment_prefix);
            if !line.is_empty() {
                out.push(' ');
                out.push_str(line);
            }
            out.push('\n');
        }
    }
}

fn leading_whitespace(s: &str) -> &str {
    let trimmed = s.trim_start_matches([' ', '\t']);
    &s[..s.len() - trimmed.len()]
}

/// Aggregation with the default `#` comment prefix.
pub fn aggregate(defs: &ApiDefinitionIndex, instruction: &str, snippets: &SnippetBundle) -> String {
    Aggregator::default().aggregate(defs, instruction, snippets)
}
