//! The discovery loop: root initialization, per-hypothesis research cycles
//! and iteration stepping under a parent-selection strategy.

mod config;
mod cycle;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use config::{AgentBackend, ConfigError, DiscoveryConfig, ExecutorKind, SimSettings};
pub use cycle::{CycleRecord, CycleResult};

use crate::agents::envelopes::EffectSign;
use crate::agents::{AgentError, AgentSuite, HttpTransport, LlmAgents, MockAgents, RootContext};
use crate::executor::{Executor, SimExecutor, SubprocessDriver};
use crate::ids::{HypId, NodeId};
use crate::memory::{Admission, HypothesisBank, MemoryError, TrajectoryTree};
use crate::redundancy::{ConceptIndex, Embedder, HttpEmbedder, MockEmbedder, RedundancyError};
use crate::rng::{run_rng, stable_hash, RunRng};
use crate::selection::{
    baseline_select, parent_score, select_hypotheses, HypothesisSelection, ParentScoreBreakdown, SelectionError,
    Strategy,
};

/// Everything a run needs to continue: tree, bank, concept archive, RNG
/// position and the configuration it was started with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryState {
    pub config: DiscoveryConfig,
    pub tree: TrajectoryTree,
    pub bank: HypothesisBank,
    pub concept_index: ConceptIndex,
    /// Completed steps; root initialization is iteration 0.
    pub iteration: u32,
    pub rng_state: RunRng,
}

impl DiscoveryState {
    pub fn new(config: DiscoveryConfig) -> Self {
        let rng = run_rng(config.seed);
        let concept_index = ConceptIndex::new(config.embedding_dim);
        Self {
            config,
            tree: TrajectoryTree::new(),
            bank: HypothesisBank::new(),
            concept_index,
            iteration: 0,
            rng_state: rng,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("root idea agent returned no proposals")]
    NoRootIdeas,
    #[error("iteration budget of {0} already spent")]
    BudgetSpent(u32),
    #[error("no expandable node left")]
    Exhausted,
}

impl From<SelectionError> for OrchestratorError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Memory(m) => OrchestratorError::Memory(m),
            _ => OrchestratorError::Exhausted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDelta {
    pub hyp_id: HypId,
    pub before: f64,
    pub after: f64,
}

/// One hypothesis applied in one experiment, with what it predicted and
/// what happened. Children that did not succeed count with accuracy 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub hyp_id: HypId,
    pub node_id: NodeId,
    pub parent_id: NodeId,
    /// Confidence when the hypothesis was selected for this experiment.
    pub confidence: f64,
    pub predicted_effect: EffectSign,
    pub parent_accuracy: f64,
    pub child_accuracy: f64,
    pub correct: bool,
    /// Root of the node that proposed the hypothesis, when known.
    pub hyp_root: Option<NodeId>,
    pub node_root: NodeId,
}

impl PredictionPair {
    pub fn improved(&self) -> bool {
        self.child_accuracy > self.parent_accuracy
    }
}

pub fn prediction_correct(effect: EffectSign, parent_acc: f64, child_acc: f64) -> bool {
    match effect {
        EffectSign::Positive => child_acc > parent_acc,
        EffectSign::Negative => child_acc < parent_acc,
    }
}

/// Prediction pairs for every hypothesis tested at `node`; empty for roots.
pub fn node_pairs(tree: &TrajectoryTree, bank: &HypothesisBank, node: NodeId) -> Result<Vec<PredictionPair>, MemoryError> {
    let n = tree.get(node)?;
    let Some(parent_id) = n.parent else {
        return Ok(Vec::new());
    };
    let parent = tree.get(parent_id)?;
    let node_root = tree.root_of(node)?;
    let mut out = Vec::new();
    for h in &n.tested_hypotheses {
        let hyp = bank.get(*h)?;
        let hyp_root = match hyp.source_node {
            Some(src) if tree.contains(src) => Some(tree.root_of(src)?),
            _ => None,
        };
        let (parent_accuracy, child_accuracy) = (parent.accuracy(), n.accuracy());
        out.push(PredictionPair {
            hyp_id: *h,
            node_id: node,
            parent_id,
            confidence: n.tested_confidence.get(h).copied().unwrap_or(hyp.initial_confidence),
            predicted_effect: hyp.predicted_effect,
            parent_accuracy,
            child_accuracy,
            correct: prediction_correct(hyp.predicted_effect, parent_accuracy, child_accuracy),
            hyp_root,
            node_root,
        });
    }
    Ok(out)
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub strategy: Strategy,
    /// `None` for root initialization.
    pub parent: Option<NodeId>,
    pub parent_score: Option<ParentScoreBreakdown>,
    /// Parents found without selectable hypotheses during this step.
    pub exhausted: Vec<NodeId>,
    pub selection: Option<HypothesisSelection>,
    pub cycles: Vec<CycleRecord>,
    pub new_nodes: Vec<NodeId>,
    pub best_so_far: f64,
    pub confidence_deltas: Vec<ConfidenceDelta>,
    pub pairs: Vec<PredictionPair>,
}

pub struct Components {
    pub agents: Box<dyn AgentSuite>,
    pub embedder: Box<dyn Embedder>,
    pub executor: Box<dyn Executor>,
}

/// Builds agents, embedder and executor from the configuration. Live
/// backends read their endpoints from the environment.
pub fn build_components(config: &DiscoveryConfig) -> Result<Components, OrchestratorError> {
    config.validate()?;
    let embed_seed = stable_hash(config.seed, &["embedder"]);
    let (agents, embedder): (Box<dyn AgentSuite>, Box<dyn Embedder>) = match config.agent_backend {
        AgentBackend::Mock => (
            Box::new(MockAgents::new(config.seed, config.mock.clone())),
            Box::new(MockEmbedder::new(embed_seed, config.embedding_dim)),
        ),
        AgentBackend::Llm => {
            let transport = HttpTransport::from_env(Duration::from_secs(600)).map_err(|e| AgentError::Unavailable {
                role: crate::agents::AgentRole::IdeaRoot,
                reason: e.to_string(),
            })?;
            let agents = LlmAgents::new(Arc::new(transport), &config.llm_model, config.parse_retries, config.parse_limits());
            let embedder = HttpEmbedder::from_env(&config.embedding_model, config.embedding_dim, Duration::from_secs(60))?;
            (Box::new(agents), Box::new(embedder))
        }
    };
    let executor: Box<dyn Executor> = match config.executor_kind {
        ExecutorKind::Sim => Box::new(SimExecutor::new(config.landscape())),
        ExecutorKind::Subprocess => Box::new(SubprocessDriver::new(config.worker_command.clone())),
    };
    Ok(Components {
        agents,
        embedder,
        executor,
    })
}

pub struct Discovery {
    pub state: DiscoveryState,
    components: Components,
    workspace: PathBuf,
}

impl Discovery {
    /// Wraps an existing state, e.g. one loaded from a checkpoint.
    /// Subprocess executions get working directories under `workspace`.
    pub fn new(state: DiscoveryState, components: Components, workspace: PathBuf) -> Self {
        Self {
            state,
            components,
            workspace,
        }
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.state.config
    }

    /// Root initialization: one batch idea call, then each proposal is coded,
    /// executed, analysed and appended, failures included.
    pub fn init_run(
        config: DiscoveryConfig,
        components: Components,
        workspace: PathBuf,
    ) -> Result<(Self, IterationReport), OrchestratorError> {
        config.validate()?;
        let mut d = Self::new(DiscoveryState::new(config), components, workspace);
        let report = d.initialize_roots()?;
        Ok((d, report))
    }

    fn initialize_roots(&mut self) -> Result<IterationReport, OrchestratorError> {
        let cfg = self.state.config.clone();
        let first_node = self.state.tree.peek_next_id();
        let mut ideas = self.components.agents.idea_root(&RootContext {
            research_direction: &cfg.research_direction,
            count: cfg.n_roots,
            first_node,
            bank: &self.state.bank,
        })?;
        ideas.truncate(cfg.n_roots);
        if ideas.is_empty() {
            return Err(OrchestratorError::NoRootIdeas);
        }
        // root drafts enter the bank before any root runs
        for (i, idea) in ideas.iter().enumerate() {
            let root_id = NodeId(first_node.0 + i as u32);
            for draft in idea.new_hypotheses.iter().take(cfg.k_hyp) {
                let admission = Admission {
                    created_by: "idea_root",
                    source_node: Some(root_id),
                    iteration: 0,
                };
                if let Err(e) = self.state.bank.admit(draft, admission) {
                    tracing::info!(root = %root_id, error = %e, "root draft not admitted");
                }
            }
        }
        let mut report = self.empty_report(0, None);
        for idea in ideas {
            let (node_id, deltas) = self.build_root(idea)?;
            report.new_nodes.push(node_id);
            report.confidence_deltas.extend(deltas);
        }
        report.best_so_far = self.state.tree.best_accuracy();
        Ok(report)
    }

    fn empty_report(&self, iteration: u32, parent: Option<NodeId>) -> IterationReport {
        IterationReport {
            iteration,
            strategy: self.state.config.strategy,
            parent,
            parent_score: None,
            exhausted: Vec::new(),
            selection: None,
            cycles: Vec::new(),
            new_nodes: Vec::new(),
            best_so_far: 0.0,
            confidence_deltas: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn choose_parent(&mut self) -> Result<NodeId, SelectionError> {
        let s = &mut self.state;
        baseline_select(
            s.config.strategy,
            &s.tree,
            &s.bank,
            &s.config.weights,
            s.iteration,
            s.config.iterations,
            &mut s.rng_state,
        )
    }

    /// One iteration: pick a parent, pick hypotheses, run one cycle per
    /// hypothesis in ascending id order.
    pub fn step(&mut self) -> Result<IterationReport, OrchestratorError> {
        if self.state.iteration >= self.state.config.iterations {
            return Err(OrchestratorError::BudgetSpent(self.state.config.iterations));
        }
        let iteration = self.state.iteration + 1;
        let mut exhausted = Vec::new();
        let (parent, selection) = loop {
            let parent = self.choose_parent()?;
            let s = &mut self.state;
            match select_hypotheses(parent, &s.tree, &s.bank, &s.config.weights, &mut s.rng_state) {
                Ok(sel) => break (parent, sel),
                Err(SelectionError::EmptyCandidates(p)) => {
                    s.tree.get_mut(p)?.exhausted = true;
                    exhausted.push(p);
                }
                Err(e) => return Err(e.into()),
            }
        };
        let mut report = self.empty_report(iteration, Some(parent));
        report.exhausted = exhausted;
        report.parent_score = Some(parent_score(&self.state.tree, &self.state.bank, parent, &self.state.config.weights)?);
        self.state.tree.get_mut(parent)?.times_selected += 1;

        let snapshot = self.state.tree.get(parent)?.clone();
        let confidence: BTreeMap<HypId, f64> = selection
            .selected
            .iter()
            .map(|h| Ok((*h, self.state.bank.get(*h)?.confidence)))
            .collect::<Result<_, MemoryError>>()?;
        for &hyp in &selection.selected {
            let (record, deltas) = self.research_cycle(&snapshot, hyp, confidence[&hyp], iteration)?;
            if let CycleResult::Child { node_id } = record.result {
                report.new_nodes.push(node_id);
                report.pairs.extend(node_pairs(&self.state.tree, &self.state.bank, node_id)?);
            }
            report.cycles.push(record);
            report.confidence_deltas.extend(deltas);
        }
        report.selection = Some(selection);
        self.state.iteration = iteration;
        report.best_so_far = self.state.tree.best_accuracy();
        Ok(report)
    }

    /// Steps until the budget is spent or no node can be expanded, calling
    /// `on_step` after every completed step.
    pub fn run_with<E>(
        &mut self,
        mut on_step: impl FnMut(&DiscoveryState, &IterationReport) -> Result<(), E>,
    ) -> Result<RunSummary, E>
    where
        E: From<OrchestratorError>,
    {
        let mut summary = RunSummary::default();
        while self.state.iteration < self.state.config.iterations {
            match self.step() {
                Ok(report) => {
                    on_step(&self.state, &report)?;
                    summary.reports.push(report);
                }
                Err(OrchestratorError::Exhausted) => {
                    tracing::info!(iteration = self.state.iteration, "search exhausted");
                    summary.exhausted = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(summary)
    }

    pub fn run(&mut self) -> Result<RunSummary, OrchestratorError> {
        self.run_with(|_, _| Ok::<(), OrchestratorError>(()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub reports: Vec<IterationReport>,
    /// Stopped before the budget because nothing was expandable.
    pub exhausted: bool,
}

/// Structural audit of a state: lineage exclusion, referential integrity
/// and the node-count bound. Returns every violation found.
pub fn audit(state: &DiscoveryState) -> Vec<String> {
    let mut problems = Vec::new();
    let tree = &state.tree;
    let bank = &state.bank;
    for node in tree.iter() {
        let mut seen = BTreeSet::new();
        let mut cursor = node.parent;
        while let Some(p) = cursor {
            match tree.get(p) {
                Ok(anc) => {
                    seen.extend(anc.tested_hypotheses.iter().copied());
                    cursor = anc.parent;
                }
                Err(_) => {
                    problems.push(format!("{} has missing ancestor {p}", node.node_id));
                    break;
                }
            }
        }
        for h in &node.tested_hypotheses {
            if seen.contains(h) {
                problems.push(format!("{} repeats {h} from its lineage", node.node_id));
            }
            if !bank.contains(*h) {
                problems.push(format!("{} tested unknown {h}", node.node_id));
            }
        }
        if node.outcome.is_none() {
            problems.push(format!("{} has no outcome", node.node_id));
        }
        if !state.concept_index.contains(node.node_id) {
            problems.push(format!("{} missing from the concept archive", node.node_id));
        }
    }
    for h in bank.iter() {
        for e in &h.evidence_log {
            if !tree.contains(e.node_id) {
                problems.push(format!("{} has evidence from unknown {}", h.id, e.node_id));
            }
        }
        if let Some(src) = h.source_node {
            if !tree.contains(src) {
                problems.push(format!("{} comes from unknown {src}", h.id));
            }
        }
    }
    let bound = state.config.n_roots as u64 + state.iteration as u64 * 2 * state.config.weights.k_hypo as u64;
    if tree.len() as u64 > bound {
        problems.push(format!("{} nodes exceed the bound {bound}", tree.len()));
    }
    problems
}

#[cfg(test)]
mod tests;
