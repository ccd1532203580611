use serde::{Deserialize, Serialize};

/// How a budget was accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    /// Classification call plus generation call; the question is sent twice.
    Adaptive,
    /// One generation call with no classification prompt.
    SingleCall,
}

/// Input-token accounting for one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub kind: BudgetKind,
    pub api_defs_tokens: usize,
    pub instruction_tokens: usize,
    pub classification_tokens: usize,
    pub snippet_tokens: usize,
    pub question_tokens: usize,
    pub total: usize,
}

impl TokenBudget {
    pub fn adaptive(api_defs: usize, instruction: usize, classification: usize, snippets: usize, question: usize) -> Self {
        Self {
            kind: BudgetKind::Adaptive,
            api_defs_tokens: api_defs,
            instruction_tokens: instruction,
            classification_tokens: classification,
            snippet_tokens: snippets,
            question_tokens: question,
            total: api_defs + instruction + classification + snippets + 2 * question,
        }
    }

    pub fn single_call(api_defs: usize, instruction: usize, snippets: usize, question: usize) -> Self {
        Self {
            kind: BudgetKind::SingleCall,
            api_defs_tokens: api_defs,
            instruction_tokens: instruction,
            classification_tokens: 0,
            snippet_tokens: snippets,
            question_tokens: question,
            total: api_defs + instruction + snippets + question,
        }
    }

    /// Single-call budget for a whole preprompt counted as one text. The
    /// definitions component absorbs whatever the instruction and snippet
    /// counts do not cover, so `total` is exactly `|preprompt| + |question|`.
    pub fn from_preprompt(preprompt: usize, instruction: usize, snippets: usize, question: usize) -> Self {
        let snippets = snippets.min(preprompt);
        let instruction = instruction.min(preprompt - snippets);
        Self::single_call(preprompt - snippets - instruction, instruction, snippets, question)
    }

    /// Tokens of everything except the question(s).
    pub fn preprompt_tokens(&self) -> usize {
        self.api_defs_tokens + self.instruction_tokens + self.classification_tokens + self.snippet_tokens
    }

    pub fn is_consistent(&self) -> bool {
        let questions = match self.kind {
            BudgetKind::Adaptive => 2 * self.question_tokens,
            BudgetKind::SingleCall => {
                if self.classification_tokens != 0 {
                    return false;
                }
                self.question_tokens
            }
        };
        self.total == self.preprompt_tokens() + questions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_fixture_totals() {
        assert_eq!(TokenBudget::adaptive(541, 77, 141, 234, 0).total, 993);
        assert_eq!(TokenBudget::adaptive(541, 77, 141, 234, 7).total, 1007);
        assert_eq!(TokenBudget::from_preprompt(3434, 77, 1386, 10).total, 3444);
    }

    #[test]
    fn consistency_checks_kind() {
        let mut b = TokenBudget::single_call(1, 2, 3, 4);
        assert!(b.is_consistent());
        b.classification_tokens = 1;
        assert!(!b.is_consistent());
    }
}
