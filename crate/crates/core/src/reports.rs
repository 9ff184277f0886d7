//! Analyses over a run snapshot: prediction calibration by confidence bin,
//! within- versus cross-lineage transfer, knowledge accumulation, and tree
//! export. All of them are pure functions of the state.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ids::NodeId;
use crate::memory::{update_confidence, MemoryError, RunStatus, TrajectoryTree};
use crate::orchestrator::{node_pairs, DiscoveryState, PredictionPair};

/// Bin edges used when none are given: quarters of the confidence range.
pub const DEFAULT_BINS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Thresholds of the knowledge curve when none are given.
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.6, 0.75];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("bin edges must be increasing and at least two: {0:?}")]
    Bins(Vec<f64>),
    #[error("thresholds must lie strictly between 0 and 1: {0:?}")]
    Thresholds(Vec<f64>),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("tree document: {0}")]
    Import(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub correct: usize,
    /// `correct / n`, or 0 for an empty bin.
    pub accuracy: f64,
}

fn ratio(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Every (hypothesis, experiment) pair in the tree, in node order.
pub fn prediction_pairs(state: &DiscoveryState) -> Result<Vec<PredictionPair>, MemoryError> {
    let mut out = Vec::new();
    for node in state.tree.iter() {
        out.extend(node_pairs(&state.tree, &state.bank, node.node_id)?);
    }
    Ok(out)
}

/// Bins are half-open `[lo, hi)` except the last, which includes `hi`.
pub fn calibration_from_pairs(pairs: &[PredictionPair], edges: &[f64]) -> Result<Vec<CalibrationBin>, ReportError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ReportError::Bins(edges.to_vec()));
    }
    let last = edges.len() - 2;
    let mut bins: Vec<CalibrationBin> = edges
        .windows(2)
        .map(|w| CalibrationBin {
            lo: w[0],
            hi: w[1],
            n: 0,
            correct: 0,
            accuracy: 0.0,
        })
        .collect();
    for p in pairs {
        let c = p.confidence;
        let slot = bins
            .iter()
            .enumerate()
            .position(|(i, b)| c >= b.lo && (c < b.hi || (i == last && c <= b.hi)));
        if let Some(i) = slot {
            bins[i].n += 1;
            bins[i].correct += p.correct as usize;
        }
    }
    for b in &mut bins {
        b.accuracy = ratio(b.correct, b.n);
    }
    Ok(bins)
}

pub fn calibration_report(state: &DiscoveryState, edges: &[f64]) -> Result<Vec<CalibrationBin>, ReportError> {
    calibration_from_pairs(&prediction_pairs(state)?, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransferStats {
    pub n: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransferReport {
    pub within: TransferStats,
    pub cross: TransferStats,
}

/// Applications whose hypothesis has no resolvable source lineage are left out.
pub fn transfer_from_pairs(pairs: &[PredictionPair]) -> TransferReport {
    let mut r = TransferReport::default();
    for p in pairs {
        let Some(hyp_root) = p.hyp_root else { continue };
        let s = if hyp_root == p.node_root {
            &mut r.within
        } else {
            &mut r.cross
        };
        s.n += 1;
        s.successes += p.improved() as usize;
    }
    for s in [&mut r.within, &mut r.cross] {
        s.rate = ratio(s.successes, s.n);
    }
    r
}

pub fn transfer_report(state: &DiscoveryState) -> Result<TransferReport, ReportError> {
    Ok(transfer_from_pairs(&prediction_pairs(state)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePoint {
    pub iteration: u32,
    /// Hypotheses with confidence strictly above each threshold.
    pub counts: Vec<usize>,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCurve {
    pub thresholds: Vec<f64>,
    pub points: Vec<KnowledgePoint>,
}

/// Rebuilds every hypothesis's confidence as of the end of each iteration by
/// replaying its evidence log up to that point.
pub fn knowledge_curve(state: &DiscoveryState, thresholds: &[f64]) -> Result<KnowledgeCurve, ReportError> {
    if thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(ReportError::Thresholds(thresholds.to_vec()));
    }
    let eta = state.config.weights.eta;
    let tree = &state.tree;
    let mut points = Vec::new();
    for t in 0..=state.iteration {
        let mut counts = vec![0; thresholds.len()];
        for h in state.bank.iter().filter(|h| h.created_iteration <= t) {
            let mut c = h.initial_confidence;
            for e in &h.evidence_log {
                if tree.get(e.node_id)?.created_iteration <= t {
                    c = update_confidence(c, e.evidence_type, e.strength, eta)?;
                }
            }
            for (k, th) in thresholds.iter().enumerate() {
                counts[k] += (c > *th) as usize;
            }
        }
        let best_so_far = tree
            .iter()
            .filter(|n| n.created_iteration <= t && n.status() == Some(RunStatus::Success))
            .map(|n| n.accuracy())
            .fold(0.0, f64::max);
        points.push(KnowledgePoint {
            iteration: t,
            counts,
            best_so_far,
        });
    }
    Ok(KnowledgeCurve {
        thresholds: thresholds.to_vec(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeFormat {
    Dot,
    Json,
}

impl std::str::FromStr for TreeFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(TreeFormat::Dot),
            "json" => Ok(TreeFormat::Json),
            _ => Err(format!("unknown tree format {s:?} (expected dot|json)")),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
];

fn status_marker(status: Option<RunStatus>) -> &'static str {
    match status {
        Some(RunStatus::Success) => "",
        Some(RunStatus::Failed) => " [FAILED]",
        Some(RunStatus::Timeout) => " [TIMEOUT]",
        None => " [PENDING]",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one colour per root lineage, a legend listing the
/// roots, accuracy and status in every label.
pub fn export_dot(tree: &TrajectoryTree) -> Result<String, MemoryError> {
    let roots: Vec<NodeId> = tree.iter().filter(|n| n.is_root()).map(|n| n.node_id).collect();
    let colour = |root: NodeId| PALETTE[roots.iter().position(|r| *r == root).unwrap_or(0) % PALETTE.len()];
    let mut out = String::from("digraph trajectory {\n  node [shape=box, style=filled];\n");
    for n in tree.iter() {
        let root = tree.root_of(n.node_id)?;
        let status = n.status();
        let border = if status == Some(RunStatus::Success) { "black" } else { "red" };
        let _ = writeln!(
            out,
            "  \"{id}\" [label=\"{id}\\n{title}\\nacc {acc:.4}{marker}\", fillcolor=\"{fill}\", color=\"{border}\"];",
            id = n.node_id,
            title = escape(&n.idea.title),
            acc = n.accuracy(),
            marker = status_marker(status),
            fill = colour(root),
        );
    }
    for n in tree.iter() {
        if let Some(p) = n.parent {
            let tested: Vec<String> = n.tested_hypotheses.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(out, "  \"{p}\" -> \"{}\" [label=\"{}\"];", n.node_id, tested.join(","));
        }
    }
    out.push_str("  subgraph cluster_legend {\n    label=\"roots\";\n");
    for r in &roots {
        let _ = writeln!(out, "    \"legend_{r}\" [label=\"{r}\", fillcolor=\"{}\"];", colour(*r));
    }
    out.push_str("  }\n}\n");
    Ok(out)
}

pub fn export_tree(state: &DiscoveryState, format: TreeFormat) -> Result<String, ReportError> {
    match format {
        TreeFormat::Dot => Ok(export_dot(&state.tree)?),
        TreeFormat::Json => {
            let mut s = serde_json::to_string_pretty(&state.tree).map_err(|e| ReportError::Import(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn import_tree_json(text: &str) -> Result<TrajectoryTree, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Import(e.to_string()))
}
