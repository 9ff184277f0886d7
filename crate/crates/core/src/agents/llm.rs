//! Agents backed by a chat-completion endpoint, one template pair per role.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::envelopes::{
    BrainstormEnvelope, CodeArtifact, Envelope, FeedbackEnvelope, JudgeVerdict, SynthesisEnvelope,
};
use super::parse::{ParseLimits, ValidationError};
use super::roles::AgentRole;
use super::suite::{
    AgentSuite, CodeContext, EvolveContext, FeedbackContext, FixContext, JudgeContext, RefineContext, RootContext,
    SynthesisContext,
};
use super::templates::render_prompt;
use super::transport::{call_agent, AgentError, LlmTransport};
use crate::ids::HypId;
use crate::memory::{ExperimentOutcome, HypothesisBank, RunStatus, TrajectoryNode};

pub struct LlmAgents {
    pub transport: Arc<dyn LlmTransport>,
    pub model: String,
    pub parse_retries: u32,
    pub limits: ParseLimits,
    /// Text for the root prompt's related-work slot.
    pub related_papers: String,
}

type Vars = BTreeMap<&'static str, String>;

fn architecture_summary(idea: &BrainstormEnvelope) -> String {
    let mut out = idea.concept_summary();
    let spec = &idea.architecture_spec;
    if !spec.network_structure.is_empty() {
        let _ = write!(out, "\nStructure: {}", spec.network_structure);
    }
    for block in &spec.core_blocks {
        let _ = write!(out, "\nBlock {}: {}", block.name, block.description);
    }
    out
}

fn outcome_summary(outcome: &ExperimentOutcome) -> String {
    let mut out = format!(
        "status {}, best accuracy {:.4}, wall time {:.0} s",
        outcome.status.as_str(),
        outcome.best_accuracy,
        outcome.wall_time_s
    );
    if let Some(p) = outcome.param_count {
        let _ = write!(out, ", {p} parameters");
    }
    if !outcome.accuracy_curve.is_empty() {
        let curve: Vec<String> = outcome.accuracy_curve.iter().map(|(e, a)| format!("{e}:{a:.4}")).collect();
        let _ = write!(out, "\ncurve {}", curve.join(" "));
    }
    for d in &outcome.diagnostics {
        let _ = write!(out, "\n{d}");
    }
    out
}

fn node_performance(node: &TrajectoryNode) -> String {
    match &node.outcome {
        Some(o) => outcome_summary(o),
        None => "not executed".into(),
    }
}

fn bank_listing(bank: &HypothesisBank) -> String {
    let mut out = String::new();
    for h in bank.iter() {
        let status = bank.thresholds.classify(h.confidence);
        let _ = writeln!(
            out,
            "{} [{:?}, confidence {:.3}, tested {}]: {}",
            h.id, status, h.confidence, h.times_tested, h.text
        );
        for note in &h.implementation_notes {
            let _ = writeln!(out, "  note: {} -> {}", note.common_failure, note.recommended_practice);
        }
    }
    if out.is_empty() {
        out.push_str("(empty)");
    }
    out
}

fn tested_section(bank: &HypothesisBank, tested: &[HypId]) -> String {
    if tested.is_empty() {
        return "(none)".into();
    }
    tested
        .iter()
        .map(|id| match bank.get(*id) {
            Ok(h) => format!("{}: {} (confidence {:.3})", h.id, h.text, h.confidence),
            Err(_) => format!("{id}: unknown"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn malformed(role: AgentRole, message: &str) -> AgentError {
    AgentError::Malformed {
        role,
        error: ValidationError {
            path: String::new(),
            message: message.to_string(),
        },
        attempts: 1,
    }
}

impl LlmAgents {
    pub fn new(transport: Arc<dyn LlmTransport>, model: impl Into<String>, parse_retries: u32, limits: ParseLimits) -> Self {
        Self {
            transport,
            model: model.into(),
            parse_retries,
            limits,
            related_papers: "(none supplied)".into(),
        }
    }

    fn call(&self, role: AgentRole, template: &str, vars: &Vars) -> Result<Envelope, AgentError> {
        let render = |suffix: &str| {
            render_prompt(&format!("{template}_{suffix}"), vars).map_err(|e| AgentError::Unavailable {
                role,
                reason: format!("template {template}_{suffix}: {e}"),
            })
        };
        let system = render("system")?;
        let user = render("user")?;
        call_agent(role, &self.model, &system, &user, self.transport.as_ref(), self.parse_retries, self.limits)
            .map(|reply| reply.envelope)
    }
}

impl AgentSuite for LlmAgents {
    fn idea_root(&self, ctx: &RootContext<'_>) -> Result<Vec<BrainstormEnvelope>, AgentError> {
        let vars = Vars::from([
            ("count", ctx.count.to_string()),
            ("curated_related_papers", self.related_papers.clone()),
            ("research_direction", ctx.research_direction.to_string()),
        ]);
        match self.call(AgentRole::IdeaRoot, "idea_root", &vars)? {
            Envelope::RootIdeas(r) => Ok(r.ideas.into_iter().take(ctx.count).collect()),
            _ => Err(malformed(AgentRole::IdeaRoot, "expected root ideas")),
        }
    }

    fn idea_evolve(&self, ctx: &EvolveContext<'_>) -> Result<BrainstormEnvelope, AgentError> {
        let mut feedback = ctx
            .parent
            .feedback
            .iter()
            .map(|f| format!("[{}] {} {}", f.agent, f.reasoning, f.actionable_feedback))
            .collect::<Vec<_>>()
            .join("\n");
        if let Some(v) = ctx.rejection {
            let _ = write!(
                feedback,
                "\nYour previous proposal duplicated an archived concept ({}). Propose something structurally different.",
                v.reasoning
            );
        }
        let vars = Vars::from([
            ("research_direction", ctx.research_direction.to_string()),
            ("parent_architecture", architecture_summary(&ctx.parent.idea)),
            ("parent_performance", node_performance(ctx.parent)),
            ("feedback_summary", feedback),
            ("hypothesis_memory", bank_listing(ctx.bank)),
            (
                "selected_hypothesis",
                format!("{}: {}", ctx.selected.id, ctx.selected.text),
            ),
        ]);
        match self.call(AgentRole::IdeaEvolve, "idea_evolve", &vars)? {
            Envelope::Brainstorm(b) => Ok(b),
            _ => Err(malformed(AgentRole::IdeaEvolve, "expected a brainstorm envelope")),
        }
    }

    fn code_init(&self, ctx: &CodeContext<'_>) -> Result<CodeArtifact, AgentError> {
        let vars = Vars::from([
            ("research_idea", format!("{}\n{}", ctx.idea.title, ctx.idea.description)),
            ("architecture_summary", architecture_summary(ctx.idea)),
        ]);
        match self.call(AgentRole::CoderInit, "coder_init", &vars)? {
            Envelope::Code(c) => match (c.model_source, c.config_source) {
                (Some(model_source), Some(config_source)) => Ok(CodeArtifact {
                    model_source,
                    config_source,
                    attempt_index: 0,
                }),
                _ => Err(malformed(AgentRole::CoderInit, "both sources are required")),
            },
            _ => Err(malformed(AgentRole::CoderInit, "expected code")),
        }
    }

    fn code_fix(&self, ctx: &FixContext<'_>) -> Result<CodeArtifact, AgentError> {
        let vars = Vars::from([
            ("iteration", ctx.attempt_index.to_string()),
            ("previous_code", ctx.previous.model_source.clone()),
            ("feedback", ctx.error.to_string()),
        ]);
        match self.call(AgentRole::CoderFix, "coder_fix", &vars)? {
            Envelope::Code(c) => Ok(CodeArtifact {
                model_source: c.model_source.unwrap_or_else(|| ctx.previous.model_source.clone()),
                config_source: c.config_source.unwrap_or_else(|| ctx.previous.config_source.clone()),
                attempt_index: ctx.attempt_index,
            }),
            _ => Err(malformed(AgentRole::CoderFix, "expected code")),
        }
    }

    fn code_refine(&self, ctx: &RefineContext<'_>) -> Result<CodeArtifact, AgentError> {
        let history = ctx.history.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(", ");
        let vars = Vars::from([
            ("config_code", ctx.current.config_source.clone()),
            ("best_accuracy", format!("{:.4}", ctx.best_accuracy)),
            ("refinement_history", history),
            ("stdout_log", ctx.stdout_log.to_string()),
        ]);
        match self.call(AgentRole::CoderRefine, "coder_refine", &vars)? {
            Envelope::Code(c) => Ok(CodeArtifact {
                model_source: c.model_source.unwrap_or_else(|| ctx.current.model_source.clone()),
                config_source: c.config_source.unwrap_or_else(|| ctx.current.config_source.clone()),
                attempt_index: ctx.attempt_index,
            }),
            _ => Err(malformed(AgentRole::CoderRefine, "expected code")),
        }
    }

    fn feedback(&self, role: AgentRole, ctx: &FeedbackContext<'_>) -> Result<FeedbackEnvelope, AgentError> {
        let mut vars = Vars::from([
            ("research_direction", ctx.research_direction.to_string()),
            ("architecture_summary", architecture_summary(ctx.idea)),
            ("tested_hypothesis_section", tested_section(ctx.bank, ctx.tested)),
        ]);
        let model_code = ctx.artifact.map(|a| a.model_source.clone()).unwrap_or_default();
        let template = match role {
            AgentRole::FeedbackQuant => {
                vars.insert("experiment_metrics_and_logs", outcome_summary(ctx.outcome));
                "feedback_quant"
            }
            AgentRole::FeedbackQual => {
                vars.insert("heatmap_method", "not available".into());
                vars.insert("image_ordering", "not available".into());
                vars.insert("samples_context", "no misclassification samples were produced".into());
                vars.insert("confusion_context", outcome_summary(ctx.outcome));
                "feedback_qual"
            }
            AgentRole::FeedbackCausal => {
                let parent = ctx.parent;
                vars.insert(
                    "parent_architecture",
                    parent.map(|p| architecture_summary(&p.idea)).unwrap_or_else(|| "(root)".into()),
                );
                vars.insert("proposed_architecture", architecture_summary(ctx.idea));
                vars.insert(
                    "performance_comparison",
                    format!(
                        "parent: {}\nchild: {}",
                        parent.map(node_performance).unwrap_or_else(|| "(none)".into()),
                        outcome_summary(ctx.outcome)
                    ),
                );
                "feedback_causal"
            }
            AgentRole::FeedbackDiag => {
                vars.insert("model_code", model_code);
                vars.insert("stdout_full", outcome_summary(ctx.outcome));
                if ctx.outcome.status == RunStatus::Timeout {
                    vars.insert("timeout_seconds", format!("{:.0}", ctx.timeout_s));
                    "feedback_diag_timeout"
                } else {
                    vars.insert("error_message", ctx.outcome.diagnostics.join("\n"));
                    vars.insert("stderr_full", ctx.outcome.diagnostics.join("\n"));
                    "feedback_diag_error"
                }
            }
            other => return Err(malformed(other, "not a feedback role")),
        };
        match self.call(role, template, &vars)? {
            Envelope::Feedback(f) => Ok(f),
            _ => Err(malformed(role, "expected feedback")),
        }
    }

    fn synthesize(&self, ctx: &SynthesisContext<'_>) -> Result<SynthesisEnvelope, AgentError> {
        let outputs = serde_json::to_string_pretty(ctx.feedback).expect("feedback serializes");
        let vars = Vars::from([
            ("node_id", ctx.node_id.to_string()),
            ("experiment_status", ctx.outcome.status.as_str().to_string()),
            ("experiment_metrics", outcome_summary(ctx.outcome)),
            ("feedback_outputs", outputs),
            ("existing_hypotheses", bank_listing(ctx.bank)),
        ]);
        match self.call(AgentRole::Synthesis, "synthesis", &vars)? {
            Envelope::Synthesis(s) => Ok(s),
            _ => Err(malformed(AgentRole::Synthesis, "expected synthesis")),
        }
    }

    fn judge(&self, ctx: &JudgeContext<'_>) -> Result<JudgeVerdict, AgentError> {
        let archive = ctx
            .neighbors
            .iter()
            .map(|n| format!("{} (cosine {:.3}):\n{}", n.node_id, n.similarity, n.summary_text))
            .collect::<Vec<_>>()
            .join("\n\n");
        let vars = Vars::from([("candidate_concept", ctx.candidate.to_string()), ("archive_entries", archive)]);
        match self.call(AgentRole::Judge, "judge", &vars)? {
            Envelope::Judge(j) => Ok(j),
            _ => Err(malformed(AgentRole::Judge, "expected a verdict")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::transport::ScriptedTransport;
    use crate::ids::NodeId;
    use crate::memory::EvidenceType;

    fn agents(replies: Vec<&str>) -> (Arc<ScriptedTransport>, LlmAgents) {
        let t = Arc::new(ScriptedTransport::new(replies.into_iter().map(|r| Ok(r.to_string()))));
        let a = LlmAgents::new(t.clone(), "test-model", 3, ParseLimits::default());
        (t, a)
    }

    #[test]
    fn evolve_prompt_carries_context_blocks() {
        let reply = r#"{"title":"t","description":"d","architecture_spec":{}}"#;
        let (t, a) = agents(vec![reply]);
        let mut bank = HypothesisBank::new();
        bank.admit(
            &crate::agents::envelopes::test_draft("alpha bravo"),
            crate::memory::Admission {
                created_by: "t",
                source_node: None,
                iteration: 0,
            },
        )
        .unwrap();
        let parent = TrajectoryNode::pending(None, BrainstormEnvelope::titled("parent net"), 0);
        let env = a
            .idea_evolve(&EvolveContext {
                research_direction: "small image classifiers",
                parent: &parent,
                child_id: NodeId(1),
                selected: bank.get(HypId(0)).unwrap(),
                bank: &bank,
                attempt: 0,
                rejection: None,
            })
            .unwrap();
        assert_eq!(env.title, "t");
        let req = &t.requests()[0];
        assert!(req.user.contains("small image classifiers"));
        assert!(req.user.contains("parent net"));
        assert!(req.user.contains("alpha bravo"));
        assert_eq!(req.temperature, 0.7);
    }

    #[test]
    fn feedback_and_synthesis_parse() {
        let fb = r#"{"reasoning":"r","hypothesis_updates":[{"hyp_id":"hyp_0","evidence_type":"supports","strength":0.6}]}"#;
        let syn = r#"{"hypothesis_updates":[]}"#;
        let (t, a) = agents(vec![fb, syn]);
        let bank = HypothesisBank::new();
        let idea = BrainstormEnvelope::titled("x");
        let outcome = ExperimentOutcome::timeout(vec![], 1800.0);
        let ctx = FeedbackContext {
            research_direction: "d",
            node_id: NodeId(2),
            idea: &idea,
            parent: None,
            outcome: &outcome,
            artifact: None,
            tested: &[],
            bank: &bank,
            timeout_s: 1800.0,
        };
        let env = a.feedback(AgentRole::FeedbackDiag, &ctx).unwrap();
        assert_eq!(env.agent, "feedback_diag");
        assert_eq!(env.hypothesis_updates[0].evidence_type, EvidenceType::Supports);
        assert!(t.requests()[0].user.contains("1800"));
        let s = a
            .synthesize(&SynthesisContext {
                node_id: NodeId(2),
                outcome: &outcome,
                feedback: &[env],
                bank: &bank,
                k_synth: 2,
            })
            .unwrap();
        assert!(s.hypothesis_updates.is_empty());
        assert_eq!(t.requests()[1].temperature, 0.3);
    }
}
