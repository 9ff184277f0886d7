//! Seven-dimension admission filter for hypothesis drafts.

use serde::{Deserialize, Serialize};

use super::envelopes::HypothesisDraft;
use super::text::{jaccard, tokens};
use crate::memory::HypothesisBank;

/// Drafts at or above this token-set similarity to a banked hypothesis are
/// not novel.
pub const NOVELTY_JACCARD: f64 = 0.8;

pub const DIMENSIONS: [&str; 7] = [
    "mechanistic",
    "scoped",
    "predictive",
    "falsifiable",
    "novel",
    "transferable",
    "actionable",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub pass: bool,
    /// In the order of [`DIMENSIONS`].
    pub verdicts: [bool; 7],
}

impl GateVerdict {
    pub fn failed_dimensions(&self) -> Vec<&'static str> {
        DIMENSIONS
            .iter()
            .zip(self.verdicts)
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| *name)
            .collect()
    }
}

pub fn quality_gate(draft: &HypothesisDraft, bank: &HypothesisBank) -> GateVerdict {
    let clauses = draft.clauses();
    let norm = draft.normalized();
    let draft_tokens = tokens(&draft.text);
    let novel = bank
        .iter()
        .all(|h| jaccard(&draft_tokens, &tokens(&h.text)) < NOVELTY_JACCARD);
    let verdicts = [
        clauses.mechanism.is_some(),
        !norm.scope.trim().is_empty(),
        !norm.prediction.trim().is_empty(),
        !norm.falsification_criteria.trim().is_empty(),
        novel,
        draft.tags.iter().any(|t| !t.trim().is_empty()),
        clauses.choice.is_some() && clauses.effect.is_some(),
    ];
    GateVerdict {
        pass: verdicts.iter().all(|&v| v),
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::envelopes::test_draft;
    use crate::memory::Admission;

    #[test]
    fn structured_draft_passes() {
        let v = quality_gate(&test_draft("depthwise gating"), &HypothesisBank::new());
        assert!(v.pass, "{:?}", v.failed_dimensions());
    }

    #[test]
    fn missing_disproved_clause_fails_falsifiable() {
        let mut d = test_draft("depthwise gating");
        d.falsification_criteria.clear();
        d.text = "IF depthwise gating is used IN image classifiers, THEN accuracy improves, BECAUSE gating shapes features.".into();
        let v = quality_gate(&d, &HypothesisBank::new());
        assert!(!v.pass);
        assert!(!v.verdicts[3]);
        assert_eq!(v.failed_dimensions(), vec!["falsifiable"]);
    }

    #[test]
    fn scope_recovered_from_text() {
        let mut d = test_draft("depthwise gating");
        d.scope.clear();
        d.prediction.clear();
        assert!(quality_gate(&d, &HypothesisBank::new()).pass);
    }

    #[test]
    fn verbatim_duplicate_fails_novelty() {
        let mut bank = HypothesisBank::new();
        let d = test_draft("depthwise gating");
        bank.admit(
            &d,
            Admission {
                created_by: "test",
                source_node: None,
                iteration: 0,
            },
        )
        .unwrap();
        let v = quality_gate(&d, &bank);
        assert_eq!(v.failed_dimensions(), vec!["novel"]);
    }

    #[test]
    fn no_because_is_not_mechanistic() {
        let mut d = test_draft("depthwise gating");
        d.text = "IF depthwise gating IN image classifiers, THEN accuracy improves. DISPROVED IF accuracy drops.".into();
        let v = quality_gate(&d, &HypothesisBank::new());
        assert_eq!(v.failed_dimensions(), vec!["mechanistic"]);
    }

    #[test]
    fn untagged_and_unactionable() {
        let mut d = test_draft("depthwise gating");
        d.tags.clear();
        d.text = d.text.replace("IF depthwise", "WHEN depthwise");
        let v = quality_gate(&d, &HypothesisBank::new());
        assert!(v.failed_dimensions().contains(&"transferable"));
        assert!(v.failed_dimensions().contains(&"actionable"));
    }
}
