//! Line-oriented indexing of Python-style API definition text.
//!
//! Only top-level definitions and methods one level inside a top-level class
//! are indexed. Anything nested deeper is body text. Comment-only lines never
//! open or close a block, and trailing blank or comment lines are not part of
//! a span, so comments spliced in after a block leave re-parsed spans intact.

use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:async[ \t]+)?(def|class)[ \t]+([A-Za-z_][A-Za-z0-9_]*)").unwrap()
});

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DefinitionError {
    #[error("malformed definitions: {0}")]
    MalformedDefinitions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Class,
    Method,
    Function,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Class => "class",
            BlockKind::Method => "method",
            BlockKind::Function => "function",
        })
    }
}

/// Half-open byte range into the indexed source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionBlock {
    pub name: String,
    pub kind: BlockKind,
    pub owner: Option<String>,
    pub span: Span,
}

/// Parsed definition text with its blocks in source order.
///
/// Blocks never overlap. A class block covers the class header and any
/// class-level text (docstring, attributes) up to its first method; each
/// method is its own block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiDefinitionIndex {
    source_text: String,
    blocks: Vec<DefinitionBlock>,
}

impl ApiDefinitionIndex {
    pub fn parse(text: &str) -> Result<Self, DefinitionError> {
        parse_api_definitions(text)
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn blocks(&self) -> &[DefinitionBlock] {
        &self.blocks
    }

    /// Text covered by `block`.
    pub fn block_text(&self, block: &DefinitionBlock) -> &str {
        &self.source_text[block.span.range()]
    }

    /// First non-class block with the given name.
    pub fn callable(&self, name: &str) -> Option<(usize, &DefinitionBlock)> {
        self.blocks
            .iter()
            .enumerate()
            .find(|(_, b)| b.kind != BlockKind::Class && b.name == name)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.name.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    start: usize,
    /// Past the trailing newline, if any.
    end: usize,
    indent: usize,
    blank: bool,
    comment: bool,
    /// Line begins inside a triple-quoted string.
    in_string: bool,
}

impl Line {
    fn is_code(&self) -> bool {
        !self.blank && !self.comment && !self.in_string
    }
}

fn split_lines(text: &str) -> Result<Vec<Line>, DefinitionError> {
    let mut lines = Vec::new();
    let mut offset = 0;
    let mut open_quote: Option<&'static str> = None;
    for (number, raw) in text.split_inclusive('\n').enumerate() {
        let body = raw.trim_end_matches(['\n', '\r']);
        let trimmed = body.trim_start_matches([' ', '\t']);
        let lead = &body[..body.len() - trimmed.len()];
        let blank = trimmed.is_empty();
        let in_string = open_quote.is_some();
        if !blank && !in_string && lead.contains(' ') && lead.contains('\t') {
            return Err(DefinitionError::MalformedDefinitions(format!(
                "line {} mixes tabs and spaces in its indentation",
                number + 1
            )));
        }
        let indent = lead.chars().map(|c| if c == '\t' { 8 } else { 1 }).sum();
        lines.push(Line {
            start: offset,
            end: offset + raw.len(),
            indent,
            blank,
            comment: !in_string && trimmed.starts_with('#'),
            in_string,
        });
        open_quote = track_triple_quotes(body, open_quote);
        offset += raw.len();
    }
    Ok(lines)
}

/// Advances the triple-quote state across one line, ignoring `#` comments
/// outside strings.
fn track_triple_quotes(line: &str, mut open: Option<&'static str>) -> Option<&'static str> {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match open {
            Some(q) => {
                if line[i..].starts_with(q) {
                    open = None;
                    i += 3;
                    continue;
                }
                if bytes[i] == b'\\' {
                    i += 1;
                }
            }
            None => {
                if bytes[i] == b'#' {
                    break;
                }
                if line[i..].starts_with("\"\"\"") {
                    open = Some("\"\"\"");
                    i += 3;
                    continue;
                }
                if line[i..].starts_with("'''") {
                    open = Some("'''");
                    i += 3;
                    continue;
                }
                if bytes[i] == b'"' || bytes[i] == b'\'' {
                    // skip a single-line string literal
                    let quote = bytes[i];
                    i += 1;
                    while i < bytes.len() && bytes[i] != quote {
                        if bytes[i] == b'\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                }
            }
        }
        i += 1;
    }
    open
}

struct Header {
    line: usize,
    kind_keyword: &'static str,
    name: String,
}

fn header_at(text: &str, line: &Line) -> Option<Header> {
    if !line.is_code() {
        return None;
    }
    let body = text[line.start..line.end].trim_start_matches([' ', '\t']);
    let caps = HEADER.captures(body)?;
    Some(Header {
        line: 0,
        kind_keyword: if &caps[1] == "class" { "class" } else { "def" },
        name: caps[2].to_string(),
    })
}

/// Number of lines (starting at `first`) that make up a possibly multi-line
/// header whose parentheses only balance on a later line.
fn header_extent(text: &str, lines: &[Line], first: usize) -> usize {
    let mut depth: i64 = 0;
    for (k, line) in lines.iter().enumerate().skip(first) {
        let content = text[line.start..line.end].split('#').next().unwrap_or("");
        for c in content.chars() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                _ => {}
            }
        }
        if depth <= 0 {
            return k - first + 1;
        }
    }
    lines.len() - first
}

/// Index of the last line belonging to the block whose header starts at
/// `header`, scanning no further than `limit` (exclusive).
fn block_last_line(text: &str, lines: &[Line], header: usize, limit: usize) -> usize {
    let indent = lines[header].indent;
    let mut last = header + header_extent(text, lines, header) - 1;
    let mut k = last + 1;
    while k < limit {
        let line = &lines[k];
        if line.in_string || (line.is_code() && line.indent > indent) {
            last = k;
        } else if line.is_code() {
            break;
        }
        k += 1;
    }
    last
}

pub fn parse_api_definitions(text: &str) -> Result<ApiDefinitionIndex, DefinitionError> {
    let lines = split_lines(text)?;

    // Top-level headers first; a top-level block ends where the next code
    // line at column zero begins.
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        let line = lines[k];
        if !line.is_code() {
            k += 1;
            continue;
        }
        let header = header_at(text, &line);
        if line.indent > 0 {
            if header.is_some() {
                return Err(DefinitionError::MalformedDefinitions(format!(
                    "definition on line {} is indented but not inside a class or function",
                    k + 1
                )));
            }
            k += 1;
            continue;
        }
        let Some(mut header) = header else {
            k += 1;
            continue;
        };
        header.line = k;
        let last = block_last_line(text, &lines, k, lines.len());
        if header.kind_keyword == "class" {
            index_class(text, &lines, &header, last, &mut blocks)?;
        } else {
            blocks.push(DefinitionBlock {
                name: header.name,
                kind: BlockKind::Function,
                owner: None,
                span: trimmed_span(&lines, k, last),
            });
        }
        k = last + 1;
    }

    if blocks.is_empty() {
        return Err(DefinitionError::MalformedDefinitions(
            "no definition headers found".into(),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for b in &blocks {
        if !seen.insert((b.owner.clone(), b.name.clone())) {
            return Err(DefinitionError::MalformedDefinitions(format!(
                "duplicate definition of `{}`",
                qualified(b)
            )));
        }
    }
    Ok(ApiDefinitionIndex {
        source_text: text.to_string(),
        blocks,
    })
}

fn qualified(block: &DefinitionBlock) -> String {
    match &block.owner {
        Some(owner) => format!("{owner}.{}", block.name),
        None => block.name.clone(),
    }
}

fn index_class(
    text: &str,
    lines: &[Line],
    header: &Header,
    last: usize,
    blocks: &mut Vec<DefinitionBlock>,
) -> Result<(), DefinitionError> {
    let first_body = header.line + header_extent(text, lines, header.line);
    let member_indent = (first_body..=last)
        .filter_map(|i| lines.get(i))
        .find(|l| l.is_code())
        .map(|l| l.indent);

    let mut methods = Vec::new();
    let mut k = first_body;
    while k <= last && k < lines.len() {
        let line = lines[k];
        let Some(member) = member_indent else { break };
        if line.is_code() && line.indent < member {
            return Err(DefinitionError::MalformedDefinitions(format!(
                "line {} is indented less than the body of class `{}`",
                k + 1,
                header.name
            )));
        }
        if line.is_code() && line.indent == member {
            if let Some(mut h) = header_at(text, &line) {
                h.line = k;
                let end = block_last_line(text, lines, k, last + 1);
                if h.kind_keyword == "def" {
                    methods.push((h, end));
                }
                k = end + 1;
                continue;
            }
        }
        k += 1;
    }

    let class_last = match methods.first() {
        Some((m, _)) => m.line.saturating_sub(1).max(header.line),
        None => last,
    };
    blocks.push(DefinitionBlock {
        name: header.name.clone(),
        kind: BlockKind::Class,
        owner: None,
        span: trimmed_span(lines, header.line, class_last),
    });
    for (m, end) in methods {
        blocks.push(DefinitionBlock {
            name: m.name,
            kind: BlockKind::Method,
            owner: Some(header.name.clone()),
            span: trimmed_span(lines, m.line, end),
        });
    }
    Ok(())
}

/// Span from the header line through `last`, dropping trailing blank and
/// comment-only lines (the header itself is always kept).
fn trimmed_span(lines: &[Line], header: usize, mut last: usize) -> Span {
    while last > header && !(lines[last].is_code() || lines[last].in_string) {
        last -= 1;
    }
    Span {
        start: lines[header].start,
        end: lines[last].end,
    }
}
