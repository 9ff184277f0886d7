//! The trajectory tree: every executed research step with its parent link.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MemoryError;
use crate::agents::envelopes::{BrainstormEnvelope, FeedbackEnvelope, JudgeVerdict};
use crate::ids::{HypId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Timeout,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Timeout => "timeout",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub status: RunStatus,
    /// Zero for anything but success.
    pub best_accuracy: f64,
    /// `(epoch, accuracy)` pairs; may hold a salvaged partial curve on failure.
    pub accuracy_curve: Vec<(u32, f64)>,
    pub wall_time_s: f64,
    pub diagnostics: Vec<String>,
    pub param_count: Option<u64>,
    /// Fitness the simulator started from (the parent's noise-free fitness);
    /// absent for real training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_fitness: Option<f64>,
}

impl ExperimentOutcome {
    pub fn success(curve: Vec<(u32, f64)>, wall_time_s: f64) -> Self {
        let best = curve.iter().map(|&(_, a)| a).fold(0.0, f64::max);
        Self {
            status: RunStatus::Success,
            best_accuracy: best,
            accuracy_curve: curve,
            wall_time_s,
            diagnostics: Vec::new(),
            param_count: None,
            reference_fitness: None,
        }
    }

    pub fn failed(diagnostic: impl Into<String>, wall_time_s: f64) -> Self {
        Self {
            status: RunStatus::Failed,
            best_accuracy: 0.0,
            accuracy_curve: Vec::new(),
            wall_time_s,
            diagnostics: vec![diagnostic.into()],
            param_count: None,
            reference_fitness: None,
        }
    }

    pub fn timeout(curve: Vec<(u32, f64)>, wall_time_s: f64) -> Self {
        let mut diagnostics = vec!["timeout: wall-clock budget exceeded".to_string()];
        if let Some(best) = curve.iter().map(|&(_, a)| a).reduce(f64::max) {
            diagnostics.push(format!("salvaged_best_accuracy={best}"));
        }
        Self {
            status: RunStatus::Timeout,
            best_accuracy: 0.0,
            accuracy_curve: curve,
            wall_time_s,
            diagnostics,
            param_count: None,
            reference_fitness: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Success
    }

    /// First diagnostic whose tag (text before `:`) equals `tag`.
    pub fn diagnostic(&self, tag: &str) -> Option<&str> {
        self.diagnostics
            .iter()
            .find(|d| d.split(':').next().map(str::trim) == Some(tag))
            .map(String::as_str)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.wall_time_s < 0.0 || !self.wall_time_s.is_finite() {
            return Err(format!("wall_time_s {} must be finite and nonnegative", self.wall_time_s));
        }
        if self.status == RunStatus::Success && (self.best_accuracy <= 0.0 || self.accuracy_curve.is_empty()) {
            return Err("success requires positive best_accuracy and a nonempty curve".into());
        }
        if self.status != RunStatus::Success && self.best_accuracy != 0.0 {
            return Err("non-success outcomes carry best_accuracy 0".into());
        }
        if !(0.0..=1.0).contains(&self.best_accuracy) {
            return Err(format!("best_accuracy {} outside [0, 1]", self.best_accuracy));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeAttempt {
    pub model_source: String,
    pub config_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNode {
    pub node_id: NodeId,
    pub parent: Option<NodeId>,
    pub idea: BrainstormEnvelope,
    pub tested_hypotheses: Vec<HypId>,
    pub code_attempts: Vec<CodeAttempt>,
    pub outcome: Option<ExperimentOutcome>,
    pub feedback: Vec<FeedbackEnvelope>,
    pub novelty_verdict: Option<JudgeVerdict>,
    pub wl_embedding: Option<Vec<f64>>,
    pub created_iteration: u32,
    pub times_selected: u32,
    /// Confidence of each tested hypothesis when it was selected.
    #[serde(default)]
    pub tested_confidence: BTreeMap<HypId, f64>,
    /// Hypotheses already attempted with this node as the parent.
    #[serde(default)]
    pub tried_hypotheses: Vec<HypId>,
    /// Set once hypothesis selection came back empty for this node.
    #[serde(default)]
    pub exhausted: bool,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl TrajectoryNode {
    /// A node awaiting insertion; its id is assigned by [`TrajectoryTree::append`].
    pub fn pending(parent: Option<NodeId>, idea: BrainstormEnvelope, created_iteration: u32) -> Self {
        Self {
            node_id: NodeId(0),
            parent,
            idea,
            tested_hypotheses: Vec::new(),
            code_attempts: Vec::new(),
            outcome: None,
            feedback: Vec::new(),
            novelty_verdict: None,
            wl_embedding: None,
            created_iteration,
            times_selected: 0,
            tested_confidence: BTreeMap::new(),
            tried_hypotheses: Vec::new(),
            exhausted: false,
            flags: Vec::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn accuracy(&self) -> f64 {
        self.outcome.as_ref().map_or(0.0, |o| o.best_accuracy)
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.outcome.as_ref().map(|o| o.status)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrajectoryTree {
    pub nodes: BTreeMap<NodeId, TrajectoryNode>,
    pub roots: Vec<NodeId>,
    pub next_id: u32,
}

impl TrajectoryTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Result<&TrajectoryNode, MemoryError> {
        self.nodes.get(&id).ok_or(MemoryError::NodeNotFound(id))
    }

    pub fn get_mut(&mut self, id: NodeId) -> Result<&mut TrajectoryNode, MemoryError> {
        self.nodes.get_mut(&id).ok_or(MemoryError::NodeNotFound(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrajectoryNode> {
        self.nodes.values()
    }

    /// The id the next appended node will receive.
    pub fn peek_next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn append(&mut self, mut node: TrajectoryNode) -> Result<NodeId, MemoryError> {
        if let Some(parent) = node.parent {
            if !self.nodes.contains_key(&parent) {
                return Err(MemoryError::NodeNotFound(parent));
            }
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        node.node_id = id;
        if node.parent.is_none() {
            self.roots.push(id);
        }
        self.nodes.insert(id, node);
        Ok(id)
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Result<Vec<NodeId>, MemoryError> {
        let mut out = Vec::new();
        let mut cursor = self.get(id)?.parent;
        while let Some(p) = cursor {
            out.push(p);
            cursor = self.get(p)?.parent;
        }
        Ok(out)
    }

    pub fn root_of(&self, id: NodeId) -> Result<NodeId, MemoryError> {
        Ok(self.ancestors(id)?.last().copied().unwrap_or(id))
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.parent == Some(id))
            .map(|n| n.node_id)
            .collect()
    }

    pub fn child_counts(&self) -> BTreeMap<NodeId, usize> {
        let mut counts: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        for node in self.nodes.values() {
            if let Some(p) = node.parent {
                *counts.entry(p).or_default() += 1;
            }
        }
        counts
    }

    /// Union of `tested_hypotheses` over `id` and all its ancestors.
    pub fn lineage_tested(&self, id: NodeId) -> Result<BTreeSet<HypId>, MemoryError> {
        let mut tested: BTreeSet<HypId> = self.get(id)?.tested_hypotheses.iter().copied().collect();
        for a in self.ancestors(id)? {
            tested.extend(self.get(a)?.tested_hypotheses.iter().copied());
        }
        Ok(tested)
    }

    /// Best accuracy among successful nodes, 0 when none succeeded.
    pub fn best_accuracy(&self) -> f64 {
        self.nodes
            .values()
            .filter_map(|n| n.outcome.as_ref())
            .filter(|o| o.is_success())
            .map(|o| o.best_accuracy)
            .fold(0.0, f64::max)
    }
}

/// Free-function form of [`TrajectoryTree::append`].
pub fn append_node(tree: &mut TrajectoryTree, node: TrajectoryNode) -> Result<NodeId, MemoryError> {
    tree.append(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::envelopes::BrainstormEnvelope;

    fn idea() -> BrainstormEnvelope {
        BrainstormEnvelope::titled("test idea")
    }

    #[test]
    fn first_root_gets_node_0() {
        let mut tree = TrajectoryTree::new();
        let id = tree.append(TrajectoryNode::pending(None, idea(), 0)).unwrap();
        assert_eq!(id, NodeId(0));
        assert_eq!(tree.roots, vec![NodeId(0)]);
    }

    #[test]
    fn child_keeps_parent_pointer() {
        let mut tree = TrajectoryTree::new();
        let root = tree.append(TrajectoryNode::pending(None, idea(), 0)).unwrap();
        let child = tree.append(TrajectoryNode::pending(Some(root), idea(), 1)).unwrap();
        assert_eq!(tree.get(child).unwrap().parent, Some(root));
        assert_eq!(tree.roots, vec![root]);
        assert_eq!(tree.ancestors(child).unwrap(), vec![root]);
        assert_eq!(tree.root_of(child).unwrap(), root);
    }

    #[test]
    fn dangling_parent_rejected() {
        let mut tree = TrajectoryTree::new();
        tree.append(TrajectoryNode::pending(None, idea(), 0)).unwrap();
        let err = tree.append(TrajectoryNode::pending(Some(NodeId(7)), idea(), 1)).unwrap_err();
        assert_eq!(err, MemoryError::NodeNotFound(NodeId(7)));
        assert_eq!(tree.next_id, 1);
    }

    #[test]
    fn outcome_invariants() {
        assert!(ExperimentOutcome::success(vec![(1, 0.5)], 10.0).check_invariants().is_ok());
        assert!(ExperimentOutcome::failed("crash: boom", 1.0).check_invariants().is_ok());
        let t = ExperimentOutcome::timeout(vec![(1, 0.3), (2, 0.4)], 1800.0);
        assert!(t.check_invariants().is_ok());
        assert!(t.diagnostic("salvaged_best_accuracy=0.4").is_some());
        let mut bad = ExperimentOutcome::success(vec![], 1.0);
        bad.best_accuracy = 0.0;
        assert!(bad.check_invariants().is_err());
    }
}
