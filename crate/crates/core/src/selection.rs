//! Parent-branch scoring and dual hypothesis selection, plus the baseline
//! parent strategies used for comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::ids::{HypId, NodeId};
use crate::memory::{
    candidate_hypotheses, EvidenceType, Hypothesis, HypothesisBank, HypothesisStatus, MemoryError, RunStatus,
    TrajectoryNode, TrajectoryTree,
};
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights {
    pub lambda_acc: f64,
    pub lambda_parent: f64,
    pub tau_max_s: f64,
    pub k_hypo: usize,
    pub alpha0: f64,
    pub beta0: f64,
    pub evidence_weight: f64,
    pub eta: f64,
    pub exploration_start: f64,
}

impl Default for SelectionWeights {
    fn default() -> Self {
        Self {
            lambda_acc: 0.85,
            lambda_parent: 0.6,
            tau_max_s: 1800.0,
            k_hypo: 2,
            alpha0: 1.0,
            beta0: 1.0,
            evidence_weight: 1.0,
            eta: 0.2,
            exploration_start: 0.5,
        }
    }
}

impl SelectionWeights {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        unit("lambda_acc", self.lambda_acc)?;
        unit("lambda_parent", self.lambda_parent)?;
        unit("exploration_start", self.exploration_start)?;
        if !(self.tau_max_s > 0.0) {
            return Err("tau_max_s must be positive".into());
        }
        if self.k_hypo == 0 {
            return Err("k_hypo must be positive".into());
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err("alpha0 and beta0 must be positive".into());
        }
        if !(self.evidence_weight > 0.0 && self.evidence_weight <= 1.0) {
            return Err("evidence_weight must lie in (0, 1]".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err("eta must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("no expandable node left")]
    Exhausted,
    #[error("no selectable hypothesis for {0}")]
    EmptyCandidates(NodeId),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dual,
    Greedy,
    Random,
    Dgm,
    Ee,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Dual, Strategy::Greedy, Strategy::Random, Strategy::Dgm, Strategy::Ee];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dual => "dual",
            Strategy::Greedy => "greedy",
            Strategy::Random => "random",
            Strategy::Dgm => "dgm",
            Strategy::Ee => "ee",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected dual|greedy|random|dgm|ee)"))
    }
}

pub fn quality_value(acc: f64, tau_s: f64, w: &SelectionWeights) -> f64 {
    w.lambda_acc * acc + (1.0 - w.lambda_acc) * (1.0 - tau_s.min(w.tau_max_s) / w.tau_max_s)
}

/// Nodes without an outcome score as a zero-accuracy run at the time limit.
pub fn quality(node: &TrajectoryNode, w: &SelectionWeights) -> f64 {
    match &node.outcome {
        Some(o) => quality_value(o.best_accuracy, o.wall_time_s, w),
        None => quality_value(0.0, w.tau_max_s, w),
    }
}

pub fn availability_value(tested: usize, active: usize) -> f64 {
    if active == 0 {
        0.0
    } else {
        1.0 - tested as f64 / active as f64
    }
}

/// Candidates of `node` that are still uncertain.
pub fn active_set(tree: &TrajectoryTree, bank: &HypothesisBank, node: NodeId) -> Result<BTreeSet<HypId>, MemoryError> {
    Ok(candidate_hypotheses(tree, bank, node)?
        .into_iter()
        .filter(|h| bank.status(*h) == Ok(HypothesisStatus::Uncertain))
        .collect())
}

/// Share of the active set not yet tried from this node.
pub fn availability(tree: &TrajectoryTree, bank: &HypothesisBank, node: NodeId) -> Result<f64, MemoryError> {
    let active = active_set(tree, bank, node)?;
    let tried = &tree.get(node)?.tried_hypotheses;
    let tested = active.iter().filter(|h| tried.contains(h)).count();
    Ok(availability_value(tested, active.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParentScoreBreakdown {
    pub node_id: NodeId,
    pub quality: f64,
    pub availability: f64,
    pub score: f64,
}

pub fn combine_score(quality: f64, availability: f64, w: &SelectionWeights) -> f64 {
    w.lambda_parent * quality + (1.0 - w.lambda_parent) * availability
}

pub fn parent_score(
    tree: &TrajectoryTree,
    bank: &HypothesisBank,
    node: NodeId,
    w: &SelectionWeights,
) -> Result<ParentScoreBreakdown, MemoryError> {
    let q = quality(tree.get(node)?, w);
    let a = availability(tree, bank, node)?;
    Ok(ParentScoreBreakdown {
        node_id: node,
        quality: q,
        availability: a,
        score: combine_score(q, a, w),
    })
}

/// Roots of any status and successful non-roots, not marked exhausted, with
/// at least one candidate hypothesis. Ascending id order.
pub fn expandable_nodes(tree: &TrajectoryTree, bank: &HypothesisBank) -> Result<Vec<NodeId>, MemoryError> {
    let mut out = Vec::new();
    for node in tree.iter() {
        let eligible = node.is_root() || node.status() == Some(RunStatus::Success);
        if eligible && !node.exhausted && !candidate_hypotheses(tree, bank, node.node_id)?.is_empty() {
            out.push(node.node_id);
        }
    }
    Ok(out)
}

/// Expandable nodes by descending score; ties toward the smaller id.
pub fn rank_parents(
    tree: &TrajectoryTree,
    bank: &HypothesisBank,
    w: &SelectionWeights,
) -> Result<Vec<ParentScoreBreakdown>, MemoryError> {
    let mut scored = expandable_nodes(tree, bank)?
        .into_iter()
        .map(|n| parent_score(tree, bank, n, w))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.node_id.cmp(&b.node_id)));
    Ok(scored)
}

pub fn select_parent(tree: &TrajectoryTree, bank: &HypothesisBank, w: &SelectionWeights) -> Result<NodeId, SelectionError> {
    rank_parents(tree, bank, w)?
        .first()
        .map(|s| s.node_id)
        .ok_or(SelectionError::Exhausted)
}

pub fn beta_params(h: &Hypothesis, w: &SelectionWeights) -> (f64, f64) {
    let mut alpha = w.alpha0;
    let mut beta = w.beta0;
    for e in &h.evidence_log {
        match e.evidence_type {
            EvidenceType::Supports => alpha += w.evidence_weight * e.strength,
            EvidenceType::Contradicts => beta += w.evidence_weight * e.strength,
            EvidenceType::Neutral => {}
        }
    }
    (alpha, beta)
}

pub fn epistemic(c: f64) -> f64 {
    1.0 - (2.0 * c - 1.0).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSelection {
    pub exploit: Vec<HypId>,
    pub explore: Vec<HypId>,
    /// Deduplicated union in ascending id order.
    pub selected: Vec<HypId>,
}

fn top_k(mut scored: Vec<(HypId, f64)>, k: usize) -> Vec<HypId> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(h, _)| h).collect()
}

/// Thompson draws for exploitation and epistemic value for exploration over
/// the parent's candidates not yet tried from it. One Beta draw per
/// candidate, ascending id order.
pub fn select_hypotheses(
    parent: NodeId,
    tree: &TrajectoryTree,
    bank: &HypothesisBank,
    w: &SelectionWeights,
    rng: &mut RunRng,
) -> Result<HypothesisSelection, SelectionError> {
    let tried = &tree.get(parent)?.tried_hypotheses;
    let pool: Vec<&Hypothesis> = candidate_hypotheses(tree, bank, parent)?
        .into_iter()
        .filter(|h| !tried.contains(h))
        .map(|h| bank.get(h))
        .collect::<Result<_, _>>()?;
    if pool.is_empty() {
        return Err(SelectionError::EmptyCandidates(parent));
    }
    let draws: Vec<(HypId, f64)> = pool
        .iter()
        .map(|h| {
            let (a, b) = beta_params(h, w);
            let dist = Beta::new(a, b).expect("positive beta parameters");
            (h.id, dist.sample(rng))
        })
        .collect();
    let exploit = top_k(draws, w.k_hypo);
    let explore = top_k(pool.iter().map(|h| (h.id, epistemic(h.confidence))).collect(), w.k_hypo);
    let selected: BTreeSet<HypId> = exploit.iter().chain(&explore).copied().collect();
    Ok(HypothesisSelection {
        exploit,
        explore,
        selected: selected.into_iter().collect(),
    })
}

fn greedy_pick(tree: &TrajectoryTree, nodes: &[NodeId]) -> NodeId {
    let mut best = nodes[0];
    let mut best_acc = tree.nodes[&best].accuracy();
    for &n in &nodes[1..] {
        let acc = tree.nodes[&n].accuracy();
        if acc > best_acc {
            best = n;
            best_acc = acc;
        }
    }
    best
}

fn uniform_pick(nodes: &[NodeId], rng: &mut RunRng) -> NodeId {
    nodes[rng.random_range(0..nodes.len())]
}

/// Samples proportionally to `weights`; all-zero weights fall back to uniform.
fn weighted_pick(nodes: &[NodeId], weights: &[f64], rng: &mut RunRng) -> NodeId {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return uniform_pick(nodes, rng);
    }
    let mut u = rng.random::<f64>() * total;
    for (n, wgt) in nodes.iter().zip(weights) {
        if u < *wgt {
            return *n;
        }
        u -= wgt;
    }
    *nodes.last().expect("nonempty")
}

/// Exploration probability of the annealed strategy at iteration `t` of `horizon`.
pub fn ee_exploration(start: f64, t: u32, horizon: u32) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    start * (1.0 - (t as f64 / horizon as f64).min(1.0))
}

pub fn baseline_select(
    strategy: Strategy,
    tree: &TrajectoryTree,
    bank: &HypothesisBank,
    w: &SelectionWeights,
    t: u32,
    horizon: u32,
    rng: &mut RunRng,
) -> Result<NodeId, SelectionError> {
    if strategy == Strategy::Dual {
        return select_parent(tree, bank, w);
    }
    let nodes = expandable_nodes(tree, bank)?;
    if nodes.is_empty() {
        return Err(SelectionError::Exhausted);
    }
    Ok(match strategy {
        Strategy::Greedy => greedy_pick(tree, &nodes),
        Strategy::Random => uniform_pick(&nodes, rng),
        Strategy::Dgm => {
            let counts = tree.child_counts();
            let weights: Vec<f64> = nodes
                .iter()
                .map(|n| quality(&tree.nodes[n], w) / (1.0 + counts[n] as f64))
                .collect();
            weighted_pick(&nodes, &weights, rng)
        }
        Strategy::Ee => {
            let p = ee_exploration(w.exploration_start, t, horizon);
            if rng.random::<f64>() < p {
                uniform_pick(&nodes, rng)
            } else {
                greedy_pick(tree, &nodes)
            }
        }
        Strategy::Dual => unreachable!(),
    })
}
