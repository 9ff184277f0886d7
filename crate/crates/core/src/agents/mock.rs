//! Offline agents: every reply is a pure function of the seed and the call's
//! inputs, so two runs with the same seed see identical envelopes.
//!
//! Hypothesis drafts come from a fixed pool. Draft `k` is always proposed
//! when the bank's next id is `k`, which lines hypothesis `hyp_k` up with
//! effect `k` of a synthetic landscape.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::envelopes::{
    ArchitectureSpec, BrainstormEnvelope, BrainstormReasoning, CodeArtifact, CoreBlock, EffectSign, Extras,
    FeedbackEnvelope, HypothesisDraft, HypothesisUpdate, JudgeVerdict, NoteUpdate, SynthesisEnvelope,
    TargetImprovement,
};
use super::merge::merge_feedback;
use super::roles::AgentRole;
use super::suite::{
    AgentSuite, CodeContext, EvolveContext, FeedbackContext, FixContext, JudgeContext, RefineContext, RootContext,
    SynthesisContext,
};
use super::transport::AgentError;
use crate::memory::{EvidenceType, RunStatus};
use crate::redundancy::{mock_judge, MOCK_DUPLICATE_COSINE};
use crate::rng::stable_unit;

const COMPONENTS: [(&str, &str); 12] = [
    ("squeeze excitation gating", "channel recalibration suppresses uninformative feature maps"),
    ("depthwise separable convolutions", "factorized filters free capacity for wider stages"),
    ("stochastic depth regularization", "randomly skipped residual branches reduce coadaptation"),
    ("dilated receptive kernels", "sparse sampling enlarges spatial context cheaply"),
    ("multihead spatial attention", "pairwise token interactions capture global shape"),
    ("learnable pooling weights", "adaptive aggregation preserves discriminative regions"),
    ("inverted bottleneck expansion", "expanded intermediate width raises representational rank"),
    ("gaussian error activations", "smooth nonlinearity stabilizes gradient flow"),
    ("octave frequency splitting", "separate low and high frequency paths cut redundancy"),
    ("dense skip concatenation", "feature reuse strengthens gradient propagation"),
    ("ghost feature generation", "cheap linear transforms synthesize redundant maps"),
    ("coordinate positional encoding", "explicit location channels expose spatial layout"),
];

const PLACEMENTS: [&str; 4] = [
    "within early stem stages",
    "throughout middle residual blocks",
    "right ahead of classifier head",
    "at every downsampling transition",
];

const ROOT_FAMILIES: [&str; 8] = [
    "residual ladder network",
    "wide shallow convnet",
    "hierarchical patch mixer",
    "recurrent refinement cells",
    "capsule routing backbone",
    "fractal branching network",
    "multiscale pyramid encoder",
    "kernel ensemble stack",
];

/// Largest pool the mock can draw from.
pub const POOL_CAPACITY: usize = COMPONENTS.len() * PLACEMENTS.len();

/// Pool draft number `k`; all drafts in the pool are mutually distinct under
/// the quality gate's novelty rule.
pub fn pool_draft(k: usize) -> HypothesisDraft {
    let (component, mechanism) = COMPONENTS[k % COMPONENTS.len()];
    let placement = PLACEMENTS[(k / COMPONENTS.len()) % PLACEMENTS.len()];
    HypothesisDraft {
        text: format!(
            "IF {component} is applied {placement} IN compact image classifiers, THEN validation accuracy improves, BECAUSE {mechanism}. DISPROVED IF accuracy drops."
        ),
        scope: "compact image classifiers".into(),
        prediction: "validation accuracy improves".into(),
        falsification_criteria: "accuracy drops".into(),
        tags: vec![component.to_string(), placement.to_string()],
        initial_confidence: Some(0.5),
        reasoning: format!("{mechanism}."),
        connected_hypotheses: Vec::new(),
        predicted_effect: Some(EffectSign::Positive),
        extras: Extras::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    /// Chance that an evolve call copies the parent's concept.
    pub duplicate_rate: f64,
    /// Evolve attempts below this index always copy the parent's concept.
    pub forced_duplicates: u32,
    /// Coder attempts below this index produce code that fails to run.
    pub coder_failures: u32,
    /// Chance the causal agent proposes the next pool draft.
    pub draft_rate: f64,
    pub pool_size: usize,
    /// Roles that answer with `AgentError::Unavailable`.
    pub unavailable: BTreeSet<AgentRole>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            duplicate_rate: 0.1,
            forced_duplicates: 0,
            coder_failures: 0,
            draft_rate: 0.3,
            pool_size: 20,
            unavailable: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockAgents {
    pub seed: u64,
    pub config: MockConfig,
}

fn label(hyp: &crate::memory::Hypothesis) -> String {
    if hyp.tags.is_empty() {
        hyp.id.to_string()
    } else {
        hyp.tags.join(" ")
    }
}

fn model_source(title: &str, broken: bool) -> String {
    if broken {
        format!("import torch\n\n# {title}\ndef build():\n    return Modle(num_classes=10)\n")
    } else {
        format!(
            "import torch\n\n\nclass Model(torch.nn.Module):\n    \"\"\"{title}\"\"\"\n\n    def __init__(self, num_classes=10):\n        super().__init__()\n        self.head = torch.nn.LazyLinear(num_classes)\n\n    def forward(self, x):\n        return self.head(x.flatten(1))\n"
        )
    }
}

impl MockAgents {
    pub fn new(seed: u64, config: MockConfig) -> Self {
        Self { seed, config }
    }

    fn check(&self, role: AgentRole) -> Result<(), AgentError> {
        if self.config.unavailable.contains(&role) {
            Err(AgentError::Unavailable {
                role,
                reason: "disabled in mock configuration".into(),
            })
        } else {
            Ok(())
        }
    }

    fn pool_limit(&self) -> usize {
        self.config.pool_size.min(POOL_CAPACITY)
    }

    fn pool_slice(&self, start: u32, n: usize) -> Vec<HypothesisDraft> {
        (start as usize..start as usize + n)
            .filter(|&k| k < self.pool_limit())
            .map(pool_draft)
            .collect()
    }

    fn evidence(&self, ctx: &FeedbackContext<'_>, strength_of: impl Fn(f64) -> f64) -> Vec<HypothesisUpdate> {
        // the simulator's own baseline when there is one, else the parent's run
        let parent_run = ctx
            .parent
            .and_then(|p| p.outcome.as_ref())
            .filter(|o| o.status == RunStatus::Success)
            .map(|o| o.best_accuracy);
        let baseline = parent_run.and(ctx.outcome.reference_fitness.or(parent_run));
        ctx.tested
            .iter()
            .filter_map(|h| ctx.bank.get(*h).ok())
            .map(|h| {
                let Some(parent_acc) = baseline else {
                    return HypothesisUpdate {
                        hyp_id: h.id,
                        evidence_type: EvidenceType::Neutral,
                        strength: 0.0,
                        reasoning: "no successful parent to compare against".into(),
                    };
                };
                let delta = ctx.outcome.best_accuracy - parent_acc;
                let signed = match h.predicted_effect {
                    EffectSign::Positive => delta,
                    EffectSign::Negative => -delta,
                };
                let evidence_type = if signed > 0.0 {
                    EvidenceType::Supports
                } else if signed < 0.0 {
                    EvidenceType::Contradicts
                } else {
                    EvidenceType::Neutral
                };
                HypothesisUpdate {
                    hyp_id: h.id,
                    evidence_type,
                    strength: strength_of(delta.abs()).clamp(0.0, 1.0),
                    reasoning: format!("accuracy moved {delta:+.4} against the parent"),
                }
            })
            .collect()
    }

    fn diagnose(&self, ctx: &FeedbackContext<'_>) -> FeedbackEnvelope {
        let outcome = ctx.outcome;
        let first = outcome.diagnostics.first().cloned().unwrap_or_default();
        let (evidence_type, strength, failure, practice) = if outcome.status == RunStatus::Timeout {
            (
                EvidenceType::Contradicts,
                0.8,
                format!("training exceeded {:.0} s", ctx.timeout_s),
                "reduce depth or width before adding this mechanism".to_string(),
            )
        } else if outcome.diagnostic("sanity").is_some() {
            (
                EvidenceType::Contradicts,
                0.5,
                first.clone(),
                "check initialization and normalization of the new block".to_string(),
            )
        } else {
            (
                EvidenceType::Neutral,
                0.3,
                first.clone(),
                "validate tensor shapes with a dry forward pass".to_string(),
            )
        };
        let updates: Vec<HypothesisUpdate> = ctx
            .tested
            .iter()
            .map(|h| HypothesisUpdate {
                hyp_id: *h,
                evidence_type,
                strength,
                reasoning: failure.clone(),
            })
            .collect();
        let notes = ctx
            .tested
            .iter()
            .map(|h| NoteUpdate {
                hyp_id: *h,
                common_failure: failure.clone(),
                recommended_practice: practice.clone(),
            })
            .collect();
        FeedbackEnvelope {
            agent: AgentRole::FeedbackDiag.name().into(),
            reasoning: format!("run ended with status {}: {first}", outcome.status.as_str()),
            actionable_feedback: practice,
            hypothesis_updates: updates,
            new_hypotheses: Vec::new(),
            implementation_notes: notes,
            extras: Extras::new(),
        }
    }
}

impl AgentSuite for MockAgents {
    fn idea_root(&self, ctx: &RootContext<'_>) -> Result<Vec<BrainstormEnvelope>, AgentError> {
        self.check(AgentRole::IdeaRoot)?;
        let start = ctx.bank.next_id;
        Ok((0..ctx.count)
            .map(|i| {
                let family = ROOT_FAMILIES[i % ROOT_FAMILIES.len()];
                let name = match i / ROOT_FAMILIES.len() {
                    0 => family.to_string(),
                    gen => format!("{family} generation {gen}"),
                };
                let mut idea = BrainstormEnvelope::titled(&name);
                idea.description = format!("A {name} built from scratch for {}.", ctx.research_direction);
                idea.intuition = format!("{name} offers a distinct inductive bias");
                idea.novelty = "independent starting point".into();
                idea.target_improvement = TargetImprovement::Both;
                idea.new_hypotheses = self.pool_slice(start + 2 * i as u32, 2);
                idea.architecture_spec = ArchitectureSpec {
                    core_ideas: vec![name.clone()],
                    core_blocks: vec![CoreBlock {
                        name: family.into(),
                        description: format!("stage of the {family}"),
                    }],
                    network_structure: "stem, three stages, pooled linear head".into(),
                    tunable_aspects: vec!["width".into(), "depth".into()],
                    invariants: vec!["input 32x32x3".into()],
                };
                idea
            })
            .collect())
    }

    fn idea_evolve(&self, ctx: &EvolveContext<'_>) -> Result<BrainstormEnvelope, AgentError> {
        self.check(AgentRole::IdeaEvolve)?;
        let parent = ctx.parent;
        let parent_key = parent.node_id.to_string();
        let hyp_key = ctx.selected.id.to_string();
        let attempt_key = ctx.attempt.to_string();
        let copy = ctx.attempt < self.config.forced_duplicates
            || stable_unit(self.seed, &["duplicate", &parent_key, &hyp_key, &attempt_key]) < self.config.duplicate_rate;
        if copy {
            let mut idea = parent.idea.clone();
            idea.existing_hypotheses.clear();
            idea.new_hypotheses.clear();
            return Ok(idea);
        }
        let mut lineage = parent.idea.architecture_spec.core_ideas.clone();
        let root_name = if lineage.is_empty() {
            parent.idea.title.clone()
        } else {
            lineage.remove(0)
        };
        let added = label(ctx.selected);
        lineage.push(added.clone());
        lineage.sort();
        lineage.dedup();
        let mut core_ideas = vec![root_name.clone()];
        core_ideas.extend(lineage);

        let mut idea = BrainstormEnvelope::titled(&format!("{root_name} with {added}"));
        idea.reasoning = BrainstormReasoning {
            parent_analysis: format!("{} reached {:.4}", parent.node_id, parent.accuracy()),
            failure_analysis: String::new(),
            hypothesis_usage: format!("tests {}", ctx.selected.id),
            proposed_changes: format!("add {added}"),
        };
        idea.description = format!("{root_name} combining {}.", core_ideas[1..].join(", "));
        idea.intuition = ctx.selected.text.clone();
        idea.novelty = format!("first lineage combining {added} with {root_name}");
        idea.architecture_spec = ArchitectureSpec {
            core_ideas,
            core_blocks: parent.idea.architecture_spec.core_blocks.clone(),
            network_structure: parent.idea.architecture_spec.network_structure.clone(),
            tunable_aspects: parent.idea.architecture_spec.tunable_aspects.clone(),
            invariants: parent.idea.architecture_spec.invariants.clone(),
        };
        Ok(idea)
    }

    fn code_init(&self, ctx: &CodeContext<'_>) -> Result<CodeArtifact, AgentError> {
        self.check(AgentRole::CoderInit)?;
        Ok(CodeArtifact {
            model_source: model_source(&ctx.idea.title, self.config.coder_failures > 0),
            config_source: "epochs = 20\nlr = 0.1\nbatch_size = 128\n".into(),
            attempt_index: 0,
        })
    }

    fn code_fix(&self, ctx: &FixContext<'_>) -> Result<CodeArtifact, AgentError> {
        self.check(AgentRole::CoderFix)?;
        Ok(CodeArtifact {
            model_source: model_source(&ctx.idea.title, ctx.attempt_index < self.config.coder_failures),
            config_source: ctx.previous.config_source.clone(),
            attempt_index: ctx.attempt_index,
        })
    }

    fn code_refine(&self, ctx: &RefineContext<'_>) -> Result<CodeArtifact, AgentError> {
        self.check(AgentRole::CoderRefine)?;
        let lr = 0.1 * 0.7f64.powi(ctx.history.len() as i32);
        Ok(CodeArtifact {
            model_source: ctx.current.model_source.clone(),
            config_source: format!("epochs = 20\nlr = {lr:.5}\nbatch_size = 128\n"),
            attempt_index: ctx.attempt_index,
        })
    }

    fn feedback(&self, role: AgentRole, ctx: &FeedbackContext<'_>) -> Result<FeedbackEnvelope, AgentError> {
        self.check(role)?;
        let mut env = FeedbackEnvelope {
            agent: role.name().into(),
            reasoning: String::new(),
            actionable_feedback: String::new(),
            hypothesis_updates: Vec::new(),
            new_hypotheses: Vec::new(),
            implementation_notes: Vec::new(),
            extras: Extras::new(),
        };
        match role {
            AgentRole::FeedbackQuant => {
                env.reasoning = format!("best accuracy {:.4}", ctx.outcome.best_accuracy);
                env.hypothesis_updates = self.evidence(ctx, |d| d / 0.05);
            }
            AgentRole::FeedbackCausal => {
                env.reasoning = "attributing the change to the tested mechanism".into();
                env.hypothesis_updates = self.evidence(ctx, |_| 1.0);
                let next = ctx.bank.next_id;
                let node_key = ctx.node_id.to_string();
                if (next as usize) < self.pool_limit() && stable_unit(self.seed, &["draft", &node_key]) < self.config.draft_rate {
                    let mut draft = pool_draft(next as usize);
                    draft.connected_hypotheses = ctx.tested.to_vec();
                    env.new_hypotheses.push(draft);
                }
            }
            AgentRole::FeedbackQual => {
                env.reasoning = "error patterns look unchanged".into();
                env.hypothesis_updates = ctx
                    .tested
                    .iter()
                    .map(|h| HypothesisUpdate {
                        hyp_id: *h,
                        evidence_type: EvidenceType::Neutral,
                        strength: 0.3,
                        reasoning: "no visible shift in confusions".into(),
                    })
                    .collect();
            }
            AgentRole::FeedbackDiag => return Ok(self.diagnose(ctx)),
            other => {
                return Err(AgentError::Unavailable {
                    role: other,
                    reason: "not a feedback role".into(),
                })
            }
        }
        Ok(env)
    }

    fn synthesize(&self, ctx: &SynthesisContext<'_>) -> Result<SynthesisEnvelope, AgentError> {
        self.check(AgentRole::Synthesis)?;
        Ok(merge_feedback(ctx.feedback, ctx.bank, ctx.k_synth))
    }

    fn judge(&self, ctx: &JudgeContext<'_>) -> Result<JudgeVerdict, AgentError> {
        self.check(AgentRole::Judge)?;
        Ok(mock_judge(ctx.neighbors, MOCK_DUPLICATE_COSINE))
    }
}
