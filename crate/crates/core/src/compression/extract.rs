//! Turning raw model replies into clean code.

/// Contents of every fenced block in `text`, in order. An unterminated
/// final fence runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = find_fence(rest) {
        let after_open = &rest[open..];
        let body_start = after_open.find('\n').map(|i| open + i + 1).unwrap_or(rest.len());
        let body = &rest[body_start..];
        match find_fence(body) {
            Some(close) => {
                blocks.push(&body[..close]);
                let after = &body[close..];
                let skip = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
                rest = &after[skip..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// Byte offset of the next line starting with ``` (after optional indent).
fn find_fence(text: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            return Some(offset + (line.len() - line.trim_start().len()));
        }
        offset += line.len();
    }
    None
}

/// The largest fenced block if any, else the whole reply; surrounding blank
/// lines removed.
pub fn extract_code(text: &str) -> String {
    let blocks = fenced_blocks(text);
    let chosen = blocks
        .iter()
        .copied()
        .max_by_key(|b| b.len())
        .unwrap_or(text);
    trim_blank_lines(chosen).to_string()
}

/// Every fenced block joined by blank lines, else the whole reply. Snippet
/// replies often put each snippet in its own fence.
pub fn extract_all_code(text: &str) -> String {
    let blocks = fenced_blocks(text);
    if blocks.is_empty() {
        return trim_blank_lines(text).to_string();
    }
    blocks
        .iter()
        .map(|b| trim_blank_lines(b))
        .filter(|b| !b.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn trim_blank_lines(text: &str) -> &str {
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            start += line.len();
        } else {
            break;
        }
    }
    text[start..].trim_end()
}

/// Splits a reply into snippets at blank-line-delimited top-level
/// boundaries. A chunk starts at a blank-separated paragraph whose first line
/// is an unindented comment or definition; a definition directly after a
/// comment-only chunk joins it. Chunks without any `def` are dropped.
pub fn split_snippets(text: &str) -> Vec<String> {
    let mut paragraphs: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }

    let mut chunks: Vec<Vec<Vec<&str>>> = Vec::new();
    for para in paragraphs {
        let first = para[0];
        let top_level = !first.starts_with([' ', '\t']);
        let is_comment = first.starts_with('#');
        let is_def = is_definition(first);
        let prev_comment_only = chunks
            .last()
            .is_some_and(|c| c.iter().flatten().all(|l| l.trim_start().starts_with('#')));
        let starts_new = top_level && (is_comment || is_def) && !(is_def && prev_comment_only);
        match chunks.last_mut() {
            Some(chunk) if !starts_new => chunk.push(para),
            _ => chunks.push(vec![para]),
        }
    }

    chunks
        .into_iter()
        .map(|c| c.into_iter().map(|p| p.join("\n")).collect::<Vec<_>>().join("\n\n"))
        .filter(|s| s.lines().any(is_definition))
        .collect()
}

fn is_definition(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("def ") || t.starts_with("async def ")
}
