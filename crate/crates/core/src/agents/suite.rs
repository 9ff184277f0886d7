//! The set of agents a research cycle talks to, and what each call sees.

use super::envelopes::{BrainstormEnvelope, CodeArtifact, FeedbackEnvelope, JudgeVerdict, SynthesisEnvelope};
use super::roles::AgentRole;
use super::transport::AgentError;
use crate::ids::{HypId, NodeId};
use crate::memory::{ExperimentOutcome, Hypothesis, HypothesisBank, TrajectoryNode};
use crate::redundancy::Neighbor;

#[derive(Debug, Clone, Copy)]
pub struct RootContext<'a> {
    pub research_direction: &'a str,
    pub count: usize,
    /// Id the first root will receive.
    pub first_node: NodeId,
    pub bank: &'a HypothesisBank,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveContext<'a> {
    pub research_direction: &'a str,
    pub parent: &'a TrajectoryNode,
    pub child_id: NodeId,
    pub selected: &'a Hypothesis,
    pub bank: &'a HypothesisBank,
    /// Regeneration attempt, 0 for the first proposal.
    pub attempt: u32,
    /// Judge verdict that rejected the previous attempt.
    pub rejection: Option<&'a JudgeVerdict>,
}

#[derive(Debug, Clone, Copy)]
pub struct CodeContext<'a> {
    pub node_id: NodeId,
    pub idea: &'a BrainstormEnvelope,
}

#[derive(Debug, Clone, Copy)]
pub struct FixContext<'a> {
    pub node_id: NodeId,
    pub idea: &'a BrainstormEnvelope,
    pub previous: &'a CodeArtifact,
    pub error: &'a str,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct RefineContext<'a> {
    pub node_id: NodeId,
    pub idea: &'a BrainstormEnvelope,
    pub current: &'a CodeArtifact,
    pub best_accuracy: f64,
    /// Accuracy of every run so far, first success first.
    pub history: &'a [f64],
    pub stdout_log: &'a str,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct FeedbackContext<'a> {
    pub research_direction: &'a str,
    pub node_id: NodeId,
    pub idea: &'a BrainstormEnvelope,
    /// `None` for roots.
    pub parent: Option<&'a TrajectoryNode>,
    pub outcome: &'a ExperimentOutcome,
    pub artifact: Option<&'a CodeArtifact>,
    pub tested: &'a [HypId],
    pub bank: &'a HypothesisBank,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisContext<'a> {
    pub node_id: NodeId,
    pub outcome: &'a ExperimentOutcome,
    pub feedback: &'a [FeedbackEnvelope],
    pub bank: &'a HypothesisBank,
    pub k_synth: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct JudgeContext<'a> {
    pub candidate: &'a str,
    pub neighbors: &'a [Neighbor],
}

pub trait AgentSuite: Send + Sync {
    /// One batch call returning up to `ctx.count` root proposals.
    fn idea_root(&self, ctx: &RootContext<'_>) -> Result<Vec<BrainstormEnvelope>, AgentError>;
    fn idea_evolve(&self, ctx: &EvolveContext<'_>) -> Result<BrainstormEnvelope, AgentError>;
    fn code_init(&self, ctx: &CodeContext<'_>) -> Result<CodeArtifact, AgentError>;
    fn code_fix(&self, ctx: &FixContext<'_>) -> Result<CodeArtifact, AgentError>;
    fn code_refine(&self, ctx: &RefineContext<'_>) -> Result<CodeArtifact, AgentError>;
    /// `role` is one of the four feedback roles.
    fn feedback(&self, role: AgentRole, ctx: &FeedbackContext<'_>) -> Result<FeedbackEnvelope, AgentError>;
    fn synthesize(&self, ctx: &SynthesisContext<'_>) -> Result<SynthesisEnvelope, AgentError>;
    fn judge(&self, ctx: &JudgeContext<'_>) -> Result<JudgeVerdict, AgentError>;
}
