use proptest::prelude::*;

use pcomp_core::eval::reduction_rate;
use pcomp_core::preprompt::{BudgetKind, TokenBudget};

#[test]
fn reference_components() {
    let b = TokenBudget::adaptive(541, 77, 141, 234, 0);
    assert_eq!(b.total, 993);
    assert_eq!(TokenBudget::adaptive(541, 77, 141, 234, 7).total, 1007);
    assert_eq!(reduction_rate(3434.0, 993.0).unwrap(), 71.1);
    assert_eq!(reduction_rate(1971.0, 541.0).unwrap(), 72.6);
}

#[test]
fn baseline_budget_is_preprompt_plus_question() {
    let b = TokenBudget::from_preprompt(3434, 77, 1386, 10);
    assert_eq!(b.total, 3444);
    assert_eq!(b.api_defs_tokens, 1971);
    assert_eq!(b.kind, BudgetKind::SingleCall);
    assert!(b.is_consistent());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adaptive_identity(d in 0usize..5000, i in 0usize..500, c in 0usize..500, s in 0usize..3000, q in 0usize..200) {
        let b = TokenBudget::adaptive(d, i, c, s, q);
        prop_assert_eq!(b.total, d + i + c + s + 2 * q);
        prop_assert!(b.is_consistent());
    }

    #[test]
    fn single_call_identity(d in 0usize..5000, i in 0usize..500, s in 0usize..3000, q in 0usize..200) {
        let b = TokenBudget::single_call(d, i, s, q);
        prop_assert_eq!(b.total, d + i + s + q);
        prop_assert_eq!(b.classification_tokens, 0);
        prop_assert!(b.is_consistent());
    }

    #[test]
    fn reduction_complement(base in 1u32..100_000, frac in 0.0f64..1.0) {
        let base = base as f64;
        let comp = (base * frac).floor();
        let r = reduction_rate(base, comp).unwrap();
        prop_assert!((comp / base * 100.0 + r - 100.0).abs() <= 0.05 + 1e-9);
    }
}
