use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InferenceError;

/// One question-answer pair of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    #[serde(rename = "scene")]
    pub scene_ref: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<String>,
}

pub fn parse_dataset(jsonl: &str) -> Result<Vec<QaRecord>, InferenceError> {
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (n, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| InferenceError::Dataset { line: n + 1, reason };
        let record: QaRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if record.question.trim().is_empty() {
            return Err(bad(format!("record `{}` has an empty question", record.id)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(bad(format!("duplicate record id `{}`", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaRecord>, InferenceError> {
    let text = std::fs::read_to_string(path).map_err(|e| InferenceError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_optional_type() {
        let records = parse_dataset(
            "{\"id\":\"1\",\"question\":\"Is it foo?\",\"scene\":\"s\",\"answer\":\"yes\",\"type\":\"global\"}\n\n{\"id\":\"2\",\"question\":\"q\",\"scene\":\"s\",\"answer\":\"no\"}\n",
        )
        .unwrap();
        assert_eq!(records[0].gold_type.as_deref(), Some("global"));
        assert_eq!(records[1].gold_type, None);
        assert!(!serde_json::to_string(&records[1]).unwrap().contains("type"));
    }

    #[test]
    fn rejects_empty_question_and_duplicates() {
        let empty = parse_dataset("{\"id\":\"1\",\"question\":\"  \",\"scene\":\"s\",\"answer\":\"a\"}");
        assert!(matches!(empty, Err(InferenceError::Dataset { line: 1, .. })));
        let line = "{\"id\":\"1\",\"question\":\"q\",\"scene\":\"s\",\"answer\":\"a\"}\n";
        assert!(matches!(parse_dataset(&line.repeat(2)), Err(InferenceError::Dataset { line: 2, .. })));
    }
}
