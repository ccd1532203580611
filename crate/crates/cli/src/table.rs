use std::fmt::Write as _;

use pcomp_core::eval::reduction_rate;

/// Per-component token counts before and after compression.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    /// `(component, original, compressed)` for each compressed part.
    pub parts: Vec<(String, Option<usize>, usize)>,
    pub instruction: usize,
    pub classification: usize,
    pub original_total: usize,
    pub compressed_total: usize,
}

pub struct TableInput<'a> {
    pub original_defs: usize,
    pub original_snippets: usize,
    pub original_total: usize,
    pub compressed_defs: usize,
    pub compressed_types: &'a [(String, usize)],
    pub instruction: usize,
    pub classification: usize,
}

impl TokenTable {
    /// The compressed total counts the definitions, the mean bundle, the
    /// instruction and the classification prompt once each.
    pub fn build(input: &TableInput<'_>) -> Self {
        let types = input.compressed_types;
        let mean_snippets = if types.is_empty() {
            0
        } else {
            let sum: usize = types.iter().map(|(_, n)| n).sum();
            (sum as f64 / types.len() as f64).round() as usize
        };
        let mut parts = vec![("API defs".to_string(), Some(input.original_defs), input.compressed_defs)];
        for (name, n) in types {
            parts.push((format!("Code snippets [{name}]"), Some(input.original_snippets), *n));
        }
        if types.len() > 1 {
            parts.push(("Code snippets (mean)".to_string(), Some(input.original_snippets), mean_snippets));
        }
        Self {
            parts,
            instruction: input.instruction,
            classification: input.classification,
            original_total: input.original_total,
            compressed_total: input.compressed_defs + mean_snippets + input.instruction + input.classification,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self
            .parts
            .iter()
            .map(|(name, _, _)| name.len())
            .max()
            .unwrap_or(0)
            .max("Classification".len())
            + 2;
        let reduction = |orig: usize, comp: usize| {
            reduction_rate(orig as f64, comp as f64)
                .map(|r| format!("{r:.1}%"))
                .unwrap_or_else(|_| "-".into())
        };
        let _ = writeln!(out, "{:<width$}{:>10}{:>12}{:>11}", "Component", "Original", "Compressed", "Reduction");
        for (name, orig, comp) in &self.parts {
            let o = orig.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
            let r = orig.map(|n| reduction(n, *comp)).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{name:<width$}{o:>10}{comp:>12}{r:>11}");
        }
        let _ = writeln!(out, "{:<width$}{:>10}{:>12}{:>11}", "Instruction", self.instruction, self.instruction, "-");
        let _ = writeln!(out, "{:<width$}{:>10}{:>12}{:>11}", "Classification", 0, self.classification, "-");
        let _ = writeln!(
            out,
            "{:<width$}{:>10}{:>12}{:>11}",
            "Total",
            self.original_total,
            self.compressed_total,
            reduction(self.original_total, self.compressed_total)
        );
        out
    }
}
