//! Byte-pair tokenizer over a tiktoken-format vocabulary
//! (`<base64 token> <rank>` per line).

use std::collections::HashMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use fancy_regex::Regex;

use super::TokenizerError;

/// Pre-tokenisation pattern of the cl100k family.
pub const CL100K_PATTERN: &str = r"'(?i:[sdmt]|ll|ve|re)|[^\r\n\p{L}\p{N}]?+\p{L}++|\p{N}{1,3}+| ?[^\s\p{L}\p{N}]++[\r\n]*+|\s++$|\s*[\r\n]|\s+(?!\S)|\s";

pub struct BpeTokenizer {
    ranks: HashMap<Vec<u8>, u32>,
    pattern: Regex,
}

impl std::fmt::Debug for BpeTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BpeTokenizer")
            .field("vocab_size", &self.ranks.len())
            .field("pattern", &self.pattern.as_str())
            .finish()
    }
}

impl BpeTokenizer {
    pub fn from_vocab(vocab: &str, pattern: &str) -> Result<Self, TokenizerError> {
        let mut ranks = HashMap::with_capacity(vocab.len() / 12);
        for (n, line) in vocab.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || TokenizerError::BadVocabulary(format!("line {}", n + 1));
            let (token, rank) = line.split_once(' ').ok_or_else(bad)?;
            let bytes = STANDARD.decode(token).map_err(|_| bad())?;
            let rank: u32 = rank.trim().parse().map_err(|_| bad())?;
            ranks.insert(bytes, rank);
        }
        if ranks.is_empty() {
            return Err(TokenizerError::BadVocabulary("empty vocabulary".into()));
        }
        let pattern = Regex::new(pattern).map_err(|e| TokenizerError::BadVocabulary(e.to_string()))?;
        Ok(Self { ranks, pattern })
    }

    pub fn vocab_size(&self) -> usize {
        self.ranks.len()
    }

    pub fn count(&self, text: &str) -> usize {
        let mut total = 0;
        for piece in self.pattern.find_iter(text) {
            let Ok(piece) = piece else {
                // Backtracking limit; fall back to per-char counting for the rest.
                return total + text.len();
            };
            let bytes = piece.as_str().as_bytes();
            total += if self.ranks.contains_key(bytes) {
                1
            } else {
                self.merge(bytes).len()
            };
        }
        total
    }

    /// Token byte strings for `text`, for inspection and tests.
    pub fn encode_pieces(&self, text: &str) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for piece in self.pattern.find_iter(text).flatten() {
            let bytes = piece.as_str().as_bytes();
            if self.ranks.contains_key(bytes) {
                out.push(bytes.to_vec());
            } else {
                out.extend(self.merge(bytes).into_iter().map(|r| bytes[r].to_vec()));
            }
        }
        out
    }

    /// Lowest-rank-first merging of adjacent byte ranges.
    fn merge(&self, piece: &[u8]) -> Vec<std::ops::Range<usize>> {
        let mut parts: Vec<std::ops::Range<usize>> = (0..piece.len()).map(|i| i..i + 1).collect();
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..parts.len().saturating_sub(1) {
                let joined = &piece[parts[i].start..parts[i + 1].end];
                if let Some(&rank) = self.ranks.get(joined) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    parts[i] = parts[i].start..parts[i + 1].end;
                    parts.remove(i + 1);
                }
                None => return parts,
            }
        }
    }
}
