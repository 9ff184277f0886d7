//! Running candidate architectures: a subprocess driver speaking the
//! metrics/result file protocol, and a synthetic landscape for offline runs.

pub mod sim;
pub mod subprocess;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::envelopes::CodeArtifact;
use crate::ids::{HypId, NodeId};
use crate::memory::ExperimentOutcome;
use crate::rng::RunRng;

pub use sim::{simulate_execute, SimExecutor, SyntheticLandscape};
pub use subprocess::SubprocessDriver;

pub const DEFAULT_TIMEOUT_S: f64 = 1800.0;
pub const DEFAULT_SANITY_EPOCHS: u32 = 5;
pub const DEFAULT_SANITY_FLOOR: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRequest {
    pub workdir: PathBuf,
    pub artifact: CodeArtifact,
    pub timeout_s: f64,
    pub sanity_epochs: u32,
    pub sanity_floor: f64,
}

/// Lineage facts an executor may use; the subprocess driver ignores them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineageInfo {
    /// Root of the lineage; for a new root this is its own reserved id.
    pub root: Option<NodeId>,
    /// Hypotheses tested on each ancestor, root first, parent last.
    pub ancestor_tests: Vec<Vec<HypId>>,
    /// Hypotheses tested by the node being executed.
    pub tested: Vec<HypId>,
}

pub trait Executor: Send {
    fn execute(&mut self, request: &ExecutionRequest, lineage: &LineageInfo, rng: &mut RunRng) -> ExperimentOutcome;
}

/// One line of `metrics.ndjson`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResult {
    pub status: String,
    pub best_accuracy: f64,
    pub wall_time_s: f64,
    #[serde(default)]
    pub param_count: Option<u64>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SanityVerdict {
    Continue,
    Abort,
}

/// Abort on any non-finite metric, or once `epochs` readings exist and all
/// of the first `epochs` accuracies sit below `floor`. `epochs == 0`
/// disables the floor rule.
pub fn sanity_verdict(prefix: &[EpochMetrics], floor: f64, epochs: u32) -> SanityVerdict {
    if prefix.iter().any(|m| !m.train_loss.is_finite() || !m.val_acc.is_finite()) {
        return SanityVerdict::Abort;
    }
    let n = epochs as usize;
    if n > 0 && prefix.len() >= n && prefix[..n].iter().all(|m| m.val_acc < floor) {
        return SanityVerdict::Abort;
    }
    SanityVerdict::Continue
}

/// Curve-only form of [`sanity_verdict`] for `(epoch, accuracy)` pairs.
pub fn sanity_verdict_curve(curve: &[(u32, f64)], floor: f64, epochs: u32) -> SanityVerdict {
    let metrics: Vec<EpochMetrics> = curve
        .iter()
        .map(|&(epoch, val_acc)| EpochMetrics {
            epoch,
            train_loss: 0.0,
            val_acc,
        })
        .collect();
    sanity_verdict(&metrics, floor, epochs)
}

pub(crate) fn sanity_diagnostic(prefix: &[EpochMetrics], floor: f64, epochs: u32) -> String {
    if let Some(m) = prefix.iter().find(|m| !m.train_loss.is_finite() || !m.val_acc.is_finite()) {
        format!("sanity: non-finite metric at epoch {}", m.epoch)
    } else {
        format!("sanity: first {epochs} epochs below accuracy floor {floor}")
    }
}
