use serde::{Deserialize, Serialize};

use super::EvalError;

/// Case-insensitive comparison after trimming; articles are not stripped.
pub fn exact_match(predicted: &str, gold: &str) -> bool {
    predicted.trim().to_lowercase() == gold.trim().to_lowercase()
}

/// Rounds a percentage to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// `(1 - compressed / baseline) * 100`, to one decimal.
pub fn reduction_rate(baseline_tokens: f64, compressed_tokens: f64) -> Result<f64, EvalError> {
    if baseline_tokens <= 0.0 || !baseline_tokens.is_finite() {
        return Err(EvalError::DivisionByZero);
    }
    Ok(round1((1.0 - compressed_tokens / baseline_tokens) * 100.0))
}

/// Gold × predicted counts over a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[gold][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, gold: usize) -> usize {
        self.counts[gold].iter().sum()
    }

    /// Diagonal mass as a percentage; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.diagonal() as f64 / t as f64 * 100.0,
        }
    }

    /// Per-gold-label recall as a percentage, `None` for empty rows.
    pub fn recall(&self, gold: usize) -> Option<f64> {
        match self.row_sum(gold) {
            0 => None,
            r => Some(self.counts[gold][gold] as f64 / r as f64 * 100.0),
        }
    }
}

/// Builds the matrix over `labels`. Pairs whose prediction is `None` or not
/// a label are left out, so row sums never exceed the number of pairs.
pub fn confusion_matrix<'a>(
    labels: &[String],
    pairs: impl IntoIterator<Item = (Option<&'a str>, Option<&'a str>)>,
) -> Result<ConfusionMatrix, EvalError> {
    let n = labels.len();
    let mut counts = vec![vec![0usize; n]; n];
    let position = |s: &str| labels.iter().position(|l| l == s);
    for (i, (gold, predicted)) in pairs.into_iter().enumerate() {
        let gold = gold.ok_or(EvalError::MissingGoldTypes { index: i })?;
        let g = position(gold).ok_or_else(|| EvalError::UnknownLabel(gold.to_string()))?;
        if let Some(p) = predicted.and_then(position) {
            counts[g][p] += 1;
        }
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}
