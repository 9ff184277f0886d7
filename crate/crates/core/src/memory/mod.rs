//! Structured memory: the hypothesis bank and the trajectory tree.

pub mod bank;
pub mod confidence;
pub mod tree;

use std::collections::BTreeSet;

pub use bank::{
    admit_hypothesis, record_evidence, Admission, EvidenceEntry, Hypothesis, HypothesisBank,
    ImplementationNote,
};
pub use confidence::{
    classify_status, update_confidence, EvidenceType, HypothesisStatus, StatusThresholds,
    CONFIDENCE_MAX, CONFIDENCE_MIN, INITIAL_CONFIDENCE,
};
pub use tree::{append_node, CodeAttempt, ExperimentOutcome, RunStatus, TrajectoryNode, TrajectoryTree};

use crate::ids::{HypId, NodeId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("hypothesis {0} not found")]
    HypothesisNotFound(HypId),
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("draft rejected by quality gate (failed: {})", failed.join(", "))]
    Rejected { failed: Vec<&'static str> },
}

/// Hypotheses that are not refuted and were not tested on `node` or any of
/// its ancestors. Confirmed hypotheses stay eligible.
pub fn candidate_hypotheses(
    tree: &TrajectoryTree,
    bank: &HypothesisBank,
    node: NodeId,
) -> Result<BTreeSet<HypId>, MemoryError> {
    let tested = tree.lineage_tested(node)?;
    Ok(bank
        .iter()
        .filter(|h| !tested.contains(&h.id))
        .filter(|h| bank.thresholds.classify(h.confidence) != HypothesisStatus::Refuted)
        .map(|h| h.id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::envelopes::{test_draft, BrainstormEnvelope};
    use proptest::prelude::*;

    fn node(parent: Option<NodeId>, tested: &[u32]) -> TrajectoryNode {
        let mut n = TrajectoryNode::pending(parent, BrainstormEnvelope::titled("n"), 0);
        n.tested_hypotheses = tested.iter().map(|&i| HypId(i)).collect();
        n
    }

    fn bank_with(n: usize) -> HypothesisBank {
        let mut bank = HypothesisBank::new();
        let words = [
            "alpha bravo",
            "charlie delta",
            "echo foxtrot",
            "golf hotel",
            "india juliet",
            "kilo lima",
            "mike november",
            "oscar papa",
        ];
        for w in words.iter().take(n) {
            bank.admit(
                &test_draft(w),
                Admission {
                    created_by: "test",
                    source_node: None,
                    iteration: 0,
                },
            )
            .unwrap();
        }
        bank
    }

    #[test]
    fn parent_tested_excluded_sibling_tested_included() {
        let bank = bank_with(3);
        let mut tree = TrajectoryTree::new();
        let root = tree.append(node(None, &[])).unwrap();
        let a = tree.append(node(Some(root), &[0])).unwrap();
        let _sibling = tree.append(node(Some(root), &[1])).unwrap();
        let a_child = tree.append(node(Some(a), &[])).unwrap();
        let cands = candidate_hypotheses(&tree, &bank, a_child).unwrap();
        assert!(!cands.contains(&HypId(0)));
        assert!(cands.contains(&HypId(1)));
        assert!(cands.contains(&HypId(2)));
    }

    #[test]
    fn refuted_excluded_confirmed_included() {
        let mut bank = bank_with(3);
        bank.get_mut(HypId(0)).unwrap().confidence = 0.2;
        bank.get_mut(HypId(1)).unwrap().confidence = 0.9;
        let mut tree = TrajectoryTree::new();
        let root = tree.append(node(None, &[])).unwrap();
        let cands = candidate_hypotheses(&tree, &bank, root).unwrap();
        assert_eq!(cands.into_iter().collect::<Vec<_>>(), vec![HypId(1), HypId(2)]);
    }

    #[test]
    fn unknown_node_is_not_found() {
        let bank = bank_with(1);
        let tree = TrajectoryTree::new();
        assert_eq!(
            candidate_hypotheses(&tree, &bank, NodeId(3)).unwrap_err(),
            MemoryError::NodeNotFound(NodeId(3))
        );
    }

    /// Independent oracle: walk parent pointers by hand and collect tests.
    fn brute_force_lineage(tree: &TrajectoryTree, id: NodeId) -> BTreeSet<HypId> {
        let mut out = BTreeSet::new();
        let mut cur = Some(id);
        let mut guard = 0;
        while let Some(c) = cur {
            let n = &tree.nodes[&c];
            out.extend(n.tested_hypotheses.iter().copied());
            cur = n.parent;
            guard += 1;
            assert!(guard <= tree.nodes.len(), "cycle in parent pointers");
        }
        out
    }

    proptest! {
        #[test]
        fn random_appends_keep_forest_shape(ops in proptest::collection::vec((any::<bool>(), 0usize..64, proptest::collection::vec(0u32..8, 0..3)), 1..60)) {
            let bank = bank_with(8);
            let mut tree = TrajectoryTree::new();
            for (is_root, pick, tested) in ops {
                let parent = if is_root || tree.is_empty() {
                    None
                } else {
                    let keys: Vec<NodeId> = tree.nodes.keys().copied().collect();
                    Some(keys[pick % keys.len()])
                };
                tree.append(node(parent, &tested)).unwrap();
            }
            for n in tree.iter() {
                // single parent, acyclic, roots have no parent
                prop_assert_eq!(n.parent.is_none(), tree.roots.contains(&n.node_id));
                if let Some(p) = n.parent {
                    prop_assert!(p < n.node_id);
                }
                let lineage = brute_force_lineage(&tree, n.node_id);
                let cands = candidate_hypotheses(&tree, &bank, n.node_id).unwrap();
                prop_assert!(cands.is_disjoint(&lineage));
                for h in bank.iter() {
                    if !lineage.contains(&h.id) {
                        prop_assert!(cands.contains(&h.id));
                    }
                }
            }
        }
    }
}
