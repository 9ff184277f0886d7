//! One research cycle: idea, novelty check, hypothesis admission, coding with
//! repair and refinement, execution, feedback, synthesis, memory update.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ConfidenceDelta, Discovery, OrchestratorError};
use crate::agents::envelopes::{BrainstormEnvelope, CodeArtifact, FeedbackEnvelope, JudgeVerdict, SynthesisEnvelope};
use crate::agents::{
    merge_feedback, AgentRole, CodeContext, EvolveContext, FeedbackContext, FixContext, JudgeContext, RefineContext,
    SynthesisContext,
};
use crate::executor::{ExecutionRequest, LineageInfo};
use crate::ids::{HypId, NodeId};
use crate::memory::{
    candidate_hypotheses, Admission, CodeAttempt, EvidenceEntry, EvidenceType, ExperimentOutcome, RunStatus,
    TrajectoryNode,
};
use crate::redundancy::{check_novelty, RedundancyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CycleResult {
    Child { node_id: NodeId },
    /// Every proposal within the regeneration budget duplicated the archive.
    Skipped,
    /// An agent or backend failed before an idea was accepted.
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub hyp_id: HypId,
    pub result: CycleResult,
    pub duplicate_rejections: u32,
    pub admitted: Vec<HypId>,
    pub drafts_rejected: u32,
    pub executions: u32,
    pub status: Option<RunStatus>,
    pub accuracy: Option<f64>,
    pub flags: Vec<String>,
}

impl CycleRecord {
    fn new(hyp_id: HypId) -> Self {
        Self {
            hyp_id,
            result: CycleResult::Skipped,
            duplicate_rejections: 0,
            admitted: Vec::new(),
            drafts_rejected: 0,
            executions: 0,
            status: None,
            accuracy: None,
            flags: Vec::new(),
        }
    }
}

struct CodePhase {
    attempts: Vec<CodeAttempt>,
    outcome: ExperimentOutcome,
    artifact: Option<CodeArtifact>,
    executions: u32,
    flags: Vec<String>,
}

struct Analysis {
    feedback: Vec<FeedbackEnvelope>,
    synthesis: SynthesisEnvelope,
    flags: Vec<String>,
}

fn is_code_error(outcome: &ExperimentOutcome) -> bool {
    outcome.status == RunStatus::Failed && outcome.diagnostic("crash").is_some()
}

fn feedback_roles(outcome: &ExperimentOutcome) -> &'static [AgentRole] {
    if outcome.is_success() {
        &[AgentRole::FeedbackQuant, AgentRole::FeedbackQual, AgentRole::FeedbackCausal]
    } else {
        &[AgentRole::FeedbackDiag]
    }
}

/// Node under construction plus the facts the later phases need.
struct Pending {
    node: TrajectoryNode,
    node_id: NodeId,
    lineage: LineageInfo,
    summary: String,
    embedding: Vec<f64>,
}

impl Discovery {
    fn execute(&mut self, node_id: NodeId, artifact: &CodeArtifact, lineage: &LineageInfo, run: u32) -> ExperimentOutcome {
        let cfg = &self.state.config;
        let request = ExecutionRequest {
            workdir: self.workspace.join(node_id.to_string()).join(format!("run_{run}")),
            artifact: artifact.clone(),
            timeout_s: cfg.timeout_s,
            sanity_epochs: cfg.sanity_epochs,
            sanity_floor: cfg.sanity_floor,
        };
        self.components.executor.execute(&request, lineage, &mut self.state.rng_state)
    }

    /// Initial code, up to `r_max` repairs of crashing code, then up to
    /// `f_max` refinements while each run still gains at least the plateau
    /// threshold over the previous one. The best successful run wins.
    fn code_and_execute(&mut self, node_id: NodeId, idea: &BrainstormEnvelope, lineage: &LineageInfo) -> CodePhase {
        let (r_max, f_max, plateau) = {
            let c = &self.state.config;
            (c.r_max, c.f_max, c.refine_plateau)
        };
        let mut phase = CodePhase {
            attempts: Vec::new(),
            outcome: ExperimentOutcome::failed("agent: coder produced no code", 0.0),
            artifact: None,
            executions: 0,
            flags: Vec::new(),
        };
        let mut artifact = match self.components.agents.code_init(&CodeContext { node_id, idea }) {
            Ok(a) => a,
            Err(e) => {
                phase.outcome = ExperimentOutcome::failed(format!("agent: {e}"), 0.0);
                return phase;
            }
        };
        let mut outcome = self.execute(node_id, &artifact, lineage, phase.executions);
        phase.executions += 1;
        let mut fixes = 0;
        while is_code_error(&outcome) && fixes < r_max {
            let error = outcome.diagnostics.join("\n");
            phase.attempts.push(CodeAttempt {
                model_source: artifact.model_source.clone(),
                config_source: artifact.config_source.clone(),
                error_text: Some(error.clone()),
            });
            fixes += 1;
            let fix = self.components.agents.code_fix(&FixContext {
                node_id,
                idea,
                previous: &artifact,
                error: &error,
                attempt_index: fixes,
            });
            match fix {
                Ok(a) => artifact = a,
                Err(e) => {
                    phase.flags.push(format!("coder_fix unavailable: {e}"));
                    break;
                }
            }
            outcome = self.execute(node_id, &artifact, lineage, phase.executions);
            phase.executions += 1;
        }
        phase.attempts.push(CodeAttempt {
            model_source: artifact.model_source.clone(),
            config_source: artifact.config_source.clone(),
            error_text: (!outcome.is_success()).then(|| outcome.diagnostics.join("\n")),
        });
        if !outcome.is_success() {
            phase.outcome = outcome;
            phase.artifact = Some(artifact);
            return phase;
        }

        let mut best = outcome;
        let mut best_artifact = artifact.clone();
        let mut current = artifact;
        let mut history = vec![best.best_accuracy];
        for step in 1..=f_max {
            let refine = self.components.agents.code_refine(&RefineContext {
                node_id,
                idea,
                current: &current,
                best_accuracy: best.best_accuracy,
                history: &history,
                stdout_log: "",
                attempt_index: fixes + step,
            });
            let refined = match refine {
                Ok(a) => a,
                Err(e) => {
                    phase.flags.push(format!("coder_refine unavailable: {e}"));
                    break;
                }
            };
            let o = self.execute(node_id, &refined, lineage, phase.executions);
            phase.executions += 1;
            phase.attempts.push(CodeAttempt {
                model_source: refined.model_source.clone(),
                config_source: refined.config_source.clone(),
                error_text: (!o.is_success()).then(|| o.diagnostics.join("\n")),
            });
            if !o.is_success() {
                break;
            }
            let previous = *history.last().expect("nonempty");
            history.push(o.best_accuracy);
            let gain = o.best_accuracy - previous;
            if o.best_accuracy > best.best_accuracy {
                best = o;
                best_artifact = refined.clone();
            }
            current = refined;
            if gain < plateau {
                break;
            }
        }
        phase.outcome = best;
        phase.artifact = Some(best_artifact);
        phase
    }

    /// Feedback agents run concurrently; failures drop that agent's report.
    /// A failed synthesis call falls back to the deterministic merge.
    fn analyse(&self, ctx: &FeedbackContext<'_>) -> Analysis {
        let agents = self.components.agents.as_ref();
        let roles = feedback_roles(ctx.outcome);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = roles
                .iter()
                .map(|&role| (role, s.spawn(move || agents.feedback(role, ctx))))
                .collect();
            handles
                .into_iter()
                .map(|(role, h)| (role, h.join().expect("feedback agent panicked")))
                .collect()
        });
        let mut flags = Vec::new();
        let mut feedback = Vec::new();
        for (role, result) in results {
            match result {
                Ok(mut env) => {
                    env.agent = role.name().to_string();
                    feedback.push(env);
                }
                Err(e) => flags.push(format!("{role} unavailable: {e}")),
            }
        }
        let k_synth = self.state.config.k_synth;
        let synthesis = if feedback.is_empty() {
            SynthesisEnvelope::default()
        } else {
            let call = agents.synthesize(&SynthesisContext {
                node_id: ctx.node_id,
                outcome: ctx.outcome,
                feedback: &feedback,
                bank: ctx.bank,
                k_synth,
            });
            call.unwrap_or_else(|e| {
                flags.push(format!("synthesis unavailable, merged deterministically: {e}"));
                merge_feedback(&feedback, ctx.bank, k_synth)
            })
        };
        Analysis {
            feedback,
            synthesis,
            flags,
        }
    }

    /// Applies a synthesis envelope: one evidence entry per referenced
    /// hypothesis (first update wins), a neutral entry for any tested
    /// hypothesis left without one, notes, and gated admission of drafts.
    fn apply_synthesis(
        &mut self,
        node_id: NodeId,
        tested: &[HypId],
        synthesis: &SynthesisEnvelope,
        iteration: u32,
        record: &mut CycleRecord,
    ) -> Result<Vec<ConfidenceDelta>, OrchestratorError> {
        let eta = self.state.config.weights.eta;
        let bank = &mut self.state.bank;
        let mut deltas = Vec::new();
        let mut seen = BTreeSet::new();
        let mut apply = |bank: &mut crate::memory::HypothesisBank, hyp_id: HypId, entry: EvidenceEntry| {
            let before = bank.get(hyp_id)?.confidence;
            let after = bank.record_evidence(hyp_id, entry, eta)?;
            deltas.push(ConfidenceDelta { hyp_id, before, after });
            Ok::<_, OrchestratorError>(())
        };
        for u in &synthesis.hypothesis_updates {
            if !bank.contains(u.hyp_id) || !seen.insert(u.hyp_id) {
                continue;
            }
            let entry = EvidenceEntry {
                node_id,
                evidence_type: u.evidence_type,
                strength: u.strength.clamp(0.0, 1.0),
                reasoning: u.reasoning.clone(),
                agent: AgentRole::Synthesis.name().into(),
                from_experiment: tested.contains(&u.hyp_id),
            };
            apply(bank, u.hyp_id, entry)?;
        }
        for h in tested {
            if seen.contains(h) || !bank.contains(*h) {
                continue;
            }
            let entry = EvidenceEntry {
                node_id,
                evidence_type: EvidenceType::Neutral,
                strength: 0.0,
                reasoning: "no update from synthesis".into(),
                agent: AgentRole::Synthesis.name().into(),
                from_experiment: true,
            };
            apply(bank, *h, entry)?;
        }
        for note in &synthesis.implementation_notes {
            if let Ok(h) = bank.get_mut(note.hyp_id) {
                h.add_note(&note.common_failure, &note.recommended_practice);
            }
        }
        for draft in synthesis.new_hypotheses.iter().take(self.state.config.k_synth) {
            let admission = Admission {
                created_by: AgentRole::Synthesis.name(),
                source_node: Some(node_id),
                iteration,
            };
            match bank.admit(draft, admission) {
                Ok(id) => record.admitted.push(id),
                Err(_) => record.drafts_rejected += 1,
            }
        }
        Ok(deltas)
    }

    /// Code, run, analyse and append an accepted node.
    fn complete(
        &mut self,
        mut pending: Pending,
        parent: Option<&TrajectoryNode>,
        iteration: u32,
        record: &mut CycleRecord,
    ) -> Result<Vec<ConfidenceDelta>, OrchestratorError> {
        let node_id = pending.node_id;
        let idea = pending.node.idea.clone();
        let phase = self.code_and_execute(node_id, &idea, &pending.lineage);
        record.executions = phase.executions;
        record.flags.extend(phase.flags);

        let tested = pending.node.tested_hypotheses.clone();
        let analysis = {
            let cfg = &self.state.config;
            let ctx = FeedbackContext {
                research_direction: &cfg.research_direction,
                node_id,
                idea: &idea,
                parent,
                outcome: &phase.outcome,
                artifact: phase.artifact.as_ref(),
                tested: &tested,
                bank: &self.state.bank,
                timeout_s: cfg.timeout_s,
            };
            self.analyse(&ctx)
        };
        record.flags.extend(analysis.flags);
        let deltas = self.apply_synthesis(node_id, &tested, &analysis.synthesis, iteration, record)?;

        record.status = Some(phase.outcome.status);
        record.accuracy = Some(phase.outcome.best_accuracy);
        pending.node.code_attempts = phase.attempts;
        pending.node.outcome = Some(phase.outcome);
        pending.node.feedback = analysis.feedback;
        pending.node.flags.extend(record.flags.iter().cloned());
        let appended = self.state.tree.append(pending.node)?;
        debug_assert_eq!(appended, node_id);
        self.state.concept_index.insert(node_id, &pending.summary, pending.embedding)?;
        record.result = CycleResult::Child { node_id };
        Ok(deltas)
    }

    pub(super) fn build_root(&mut self, idea: BrainstormEnvelope) -> Result<(NodeId, Vec<ConfidenceDelta>), OrchestratorError> {
        let node_id = self.state.tree.peek_next_id();
        let summary = idea.concept_summary();
        let embedding = self.components.embedder.embed(&summary)?;
        let mut node = TrajectoryNode::pending(None, idea, 0);
        node.novelty_verdict = Some(JudgeVerdict::novel("root proposal"));
        let pending = Pending {
            node,
            node_id,
            lineage: LineageInfo {
                root: Some(node_id),
                ancestor_tests: Vec::new(),
                tested: Vec::new(),
            },
            summary,
            embedding,
        };
        let mut record = CycleRecord::new(HypId(u32::MAX));
        let deltas = self.complete(pending, None, 0, &mut record)?;
        Ok((node_id, deltas))
    }

    /// Proposes ideas until one passes the novelty gate or the regeneration
    /// budget runs out.
    fn accept_idea(
        &mut self,
        parent: &TrajectoryNode,
        child_id: NodeId,
        hyp: HypId,
        record: &mut CycleRecord,
    ) -> Result<Option<(BrainstormEnvelope, JudgeVerdict, String, Vec<f64>)>, String> {
        let cfg = &self.state.config;
        let selected = self.state.bank.get(hyp).map_err(|e| e.to_string())?;
        let mut rejection: Option<JudgeVerdict> = None;
        for attempt in 0..=cfg.redundancy_retries {
            let idea = self
                .components
                .agents
                .idea_evolve(&EvolveContext {
                    research_direction: &cfg.research_direction,
                    parent,
                    child_id,
                    selected,
                    bank: &self.state.bank,
                    attempt,
                    rejection: rejection.as_ref(),
                })
                .map_err(|e| e.to_string())?;
            let summary = idea.concept_summary();
            let embedding = self.components.embedder.embed(&summary).map_err(|e| e.to_string())?;
            let agents = self.components.agents.as_ref();
            let checked = check_novelty(&self.state.concept_index, &summary, &embedding, cfg.novelty_k, |candidate, neighbors| {
                agents.judge(&JudgeContext { candidate, neighbors })
            });
            let verdict = match checked {
                Ok((v, _)) => v,
                Err(RedundancyError::FilteringUnavailable(reason)) => {
                    record.flags.push(format!("novelty unchecked: {reason}"));
                    JudgeVerdict::novel("judge unavailable; accepted unchecked")
                }
                Err(e) => return Err(e.to_string()),
            };
            if verdict.novel {
                return Ok(Some((idea, verdict, summary, embedding)));
            }
            record.duplicate_rejections += 1;
            rejection = Some(verdict);
        }
        Ok(None)
    }

    /// One attempt to grow a child of `parent` (a snapshot taken at step
    /// start) that tests `hyp`.
    pub(super) fn research_cycle(
        &mut self,
        parent: &TrajectoryNode,
        hyp: HypId,
        confidence_at_selection: f64,
        iteration: u32,
    ) -> Result<(CycleRecord, Vec<ConfidenceDelta>), OrchestratorError> {
        let parent_id = parent.node_id;
        let mut record = CycleRecord::new(hyp);
        self.state.tree.get_mut(parent_id)?.tried_hypotheses.push(hyp);
        let child_id = self.state.tree.peek_next_id();

        let (mut idea, verdict, summary, embedding) = match self.accept_idea(parent, child_id, hyp, &mut record) {
            Ok(Some(accepted)) => accepted,
            Ok(None) => {
                record.result = CycleResult::Skipped;
                return Ok((record, Vec::new()));
            }
            Err(reason) => {
                tracing::warn!(parent = %parent_id, hyp = %hyp, %reason, "cycle rejected");
                record.result = CycleResult::Rejected { reason };
                return Ok((record, Vec::new()));
            }
        };

        let k_hyp = self.state.config.k_hyp;
        idea.new_hypotheses.truncate(k_hyp);
        for draft in &idea.new_hypotheses {
            let admission = Admission {
                created_by: AgentRole::IdeaEvolve.name(),
                source_node: Some(child_id),
                iteration,
            };
            match self.state.bank.admit(draft, admission) {
                Ok(id) => record.admitted.push(id),
                Err(_) => record.drafts_rejected += 1,
            }
        }

        // referenced hypotheses count as tested when the parent could test them
        let candidates = candidate_hypotheses(&self.state.tree, &self.state.bank, parent_id)?;
        let mut tested: BTreeSet<HypId> = idea
            .existing_hypotheses
            .iter()
            .copied()
            .filter(|h| candidates.contains(h))
            .collect();
        tested.insert(hyp);

        let mut node = TrajectoryNode::pending(Some(parent_id), idea, iteration);
        node.tested_hypotheses = tested.iter().copied().collect();
        for h in &tested {
            let c = if *h == hyp {
                confidence_at_selection
            } else {
                self.state.bank.get(*h)?.confidence
            };
            node.tested_confidence.insert(*h, c);
        }
        node.novelty_verdict = Some(verdict);

        let mut ancestor_tests: Vec<Vec<HypId>> = Vec::new();
        let mut chain = vec![parent_id];
        chain.extend(self.state.tree.ancestors(parent_id)?);
        for id in chain.iter().rev() {
            ancestor_tests.push(self.state.tree.get(*id)?.tested_hypotheses.clone());
        }
        let lineage = LineageInfo {
            root: Some(*chain.last().expect("nonempty")),
            ancestor_tests,
            tested: node.tested_hypotheses.clone(),
        };
        let pending = Pending {
            node,
            node_id: child_id,
            lineage,
            summary,
            embedding,
        };
        let deltas = self.complete(pending, Some(parent), iteration, &mut record)?;
        Ok((record, deltas))
    }
}
