//! Automatic error taxonomy.
//!
//! Labels are assigned by the first matching rule, in this order:
//!
//! 1. status `coding_error` or `timeout` → `coding error`
//! 2. status `sandbox_unavailable` → `not executed`
//! 3. exact match → `correct`
//! 4. answer contains the cannot-answer sentinel → `cannot answer to simple query`
//! 5. equal once articles are removed → `correct except for articles`
//! 6. gold words appear inside a longer answer → `correct but with unnecessary details`
//! 7. answer and gold share a synonym group → `correct by paraphrasing`
//! 8. a `find` call detected nothing → `no object detected`
//! 9. otherwise → `wrong answer`
//!
//! Rules 5 to 7 are heuristics and reported as such.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::metrics::exact_match;
use crate::inference::{ExecutionResult, ExecutionStatus};

pub const CANNOT_ANSWER_SENTINEL: &str = "I cannot answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorLabel {
    #[serde(rename = "correct")]
    Correct,
    #[serde(rename = "correct but with unnecessary details")]
    UnnecessaryDetails,
    #[serde(rename = "correct except for articles")]
    Articles,
    #[serde(rename = "correct by paraphrasing")]
    Paraphrasing,
    #[serde(rename = "coding error")]
    CodingError,
    #[serde(rename = "not executed")]
    NotExecuted,
    #[serde(rename = "cannot answer to simple query")]
    CannotAnswer,
    #[serde(rename = "no object detected")]
    NoObjectDetected,
    #[serde(rename = "wrong answer")]
    WrongAnswer,
}

impl ErrorLabel {
    pub const ALL: [ErrorLabel; 9] = [
        ErrorLabel::Correct,
        ErrorLabel::UnnecessaryDetails,
        ErrorLabel::Articles,
        ErrorLabel::Paraphrasing,
        ErrorLabel::CodingError,
        ErrorLabel::NotExecuted,
        ErrorLabel::CannotAnswer,
        ErrorLabel::NoObjectDetected,
        ErrorLabel::WrongAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorLabel::Correct => "correct",
            ErrorLabel::UnnecessaryDetails => "correct but with unnecessary details",
            ErrorLabel::Articles => "correct except for articles",
            ErrorLabel::Paraphrasing => "correct by paraphrasing",
            ErrorLabel::CodingError => "coding error",
            ErrorLabel::NotExecuted => "not executed",
            ErrorLabel::CannotAnswer => "cannot answer to simple query",
            ErrorLabel::NoObjectDetected => "no object detected",
            ErrorLabel::WrongAnswer => "wrong answer",
        }
    }

    /// Assigned by a near-miss heuristic rather than a direct observation.
    pub fn is_heuristic(self) -> bool {
        matches!(
            self,
            ErrorLabel::UnnecessaryDetails | ErrorLabel::Articles | ErrorLabel::Paraphrasing
        )
    }
}

impl fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const SYNONYMS: &[&[&str]] = &[
    &["woman", "lady"],
    &["man", "gentleman", "guy"],
    &["child", "kid"],
    &["couch", "sofa"],
    &["television", "tv"],
    &["bicycle", "bike"],
    &["motorcycle", "motorbike"],
    &["airplane", "plane", "aeroplane", "aircraft"],
    &["car", "automobile"],
    &["phone", "cellphone", "cell phone", "mobile phone"],
    &["photo", "picture", "photograph"],
    &["pants", "trousers"],
    &["gray", "grey"],
    &["donut", "doughnut"],
    &["cup", "mug"],
    &["rock", "stone"],
    &["shore", "beach"],
    &["road", "street"],
    &["puppy", "dog"],
    &["kitten", "cat"],
];

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn without_articles(s: &str) -> Vec<String> {
    words(s).into_iter().filter(|w| !matches!(w.as_str(), "a" | "an" | "the")).collect()
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.len() > needle.len() && hay.windows(needle.len()).any(|w| w == needle)
}

fn synonym_group(phrase: &str) -> Option<usize> {
    SYNONYMS.iter().position(|group| group.contains(&phrase))
}

/// Label for one record's result against its gold answer.
pub fn classify_error(gold_answer: &str, result: &ExecutionResult) -> ErrorLabel {
    match result.status {
        ExecutionStatus::CodingError | ExecutionStatus::Timeout => return ErrorLabel::CodingError,
        ExecutionStatus::SandboxUnavailable => return ErrorLabel::NotExecuted,
        ExecutionStatus::Ok => {}
    }
    let predicted = result.answer.as_deref().unwrap_or("");
    if exact_match(predicted, gold_answer) {
        return ErrorLabel::Correct;
    }
    if predicted.to_lowercase().contains(&CANNOT_ANSWER_SENTINEL.to_lowercase()) {
        return ErrorLabel::CannotAnswer;
    }
    let p = without_articles(predicted);
    let g = without_articles(gold_answer);
    if !g.is_empty() && p == g {
        return ErrorLabel::Articles;
    }
    if contains_run(&words(predicted), &words(gold_answer)) {
        return ErrorLabel::UnnecessaryDetails;
    }
    if let (Some(a), Some(b)) = (synonym_group(&p.join(" ")), synonym_group(&g.join(" "))) {
        if a == b {
            return ErrorLabel::Paraphrasing;
        }
    }
    if result.trace.iter().any(|e| e.is_empty_find()) {
        return ErrorLabel::NoObjectDetected;
    }
    ErrorLabel::WrongAnswer
}
