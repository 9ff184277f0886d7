//! Structured outputs of every agent role.
//!
//! Unknown fields are kept in `extras` so a reply survives a
//! parse/serialize cycle unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::text::{structured_clauses, StructuredClauses};
use crate::ids::{HypId, NodeId};
use crate::memory::EvidenceType;

pub type Extras = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffectSign {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct HypothesisDraft {
    pub text: String,
    #[serde(default)]
    pub scope: String,
    #[serde(default)]
    pub prediction: String,
    #[serde(default)]
    pub falsification_criteria: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_confidence: Option<f64>,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub connected_hypotheses: Vec<HypId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_effect: Option<EffectSign>,
    #[serde(flatten)]
    pub extras: Extras,
}

impl HypothesisDraft {
    pub fn clauses(&self) -> StructuredClauses {
        structured_clauses(&self.text)
    }

    /// Fills empty scope / prediction / falsification fields from the
    /// `IF .. IN .. THEN .. BECAUSE .. DISPROVED IF ..` statement.
    pub fn normalized(&self) -> HypothesisDraft {
        let clauses = self.clauses();
        let mut out = self.clone();
        if out.scope.trim().is_empty() {
            out.scope = clauses.scope.unwrap_or_default();
        }
        if out.prediction.trim().is_empty() {
            out.prediction = clauses.effect.unwrap_or_default();
        }
        if out.falsification_criteria.trim().is_empty() {
            out.falsification_criteria = clauses.falsifier.unwrap_or_default();
        }
        out
    }

    /// Declared effect direction; undeclared drafts predict an improvement.
    pub fn effect_sign(&self) -> EffectSign {
        self.predicted_effect.unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BrainstormReasoning {
    #[serde(default)]
    pub parent_analysis: String,
    #[serde(default)]
    pub failure_analysis: String,
    #[serde(default)]
    pub hypothesis_usage: String,
    #[serde(default)]
    pub proposed_changes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CoreBlock {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ArchitectureSpec {
    #[serde(default)]
    pub core_ideas: Vec<String>,
    #[serde(default)]
    pub core_blocks: Vec<CoreBlock>,
    #[serde(default)]
    pub network_structure: String,
    #[serde(default)]
    pub tunable_aspects: Vec<String>,
    #[serde(default)]
    pub invariants: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetImprovement {
    Accuracy,
    Efficiency,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrainstormEnvelope {
    #[serde(default)]
    pub reasoning: BrainstormReasoning,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub intuition: String,
    #[serde(default)]
    pub novelty: String,
    #[serde(default)]
    pub target_improvement: TargetImprovement,
    #[serde(default)]
    pub existing_hypotheses: Vec<HypId>,
    #[serde(default)]
    pub new_hypotheses: Vec<HypothesisDraft>,
    pub architecture_spec: ArchitectureSpec,
    #[serde(flatten)]
    pub extras: Extras,
}

impl BrainstormEnvelope {
    pub fn titled(title: &str) -> Self {
        Self {
            reasoning: BrainstormReasoning::default(),
            title: title.to_string(),
            description: String::new(),
            intuition: String::new(),
            novelty: String::new(),
            target_improvement: TargetImprovement::Both,
            existing_hypotheses: Vec::new(),
            new_hypotheses: Vec::new(),
            architecture_spec: ArchitectureSpec::default(),
            extras: Extras::new(),
        }
    }

    /// Text handed to the embedding backend: title, description and core ideas.
    pub fn concept_summary(&self) -> String {
        let mut parts = vec![self.title.trim().to_string(), self.description.trim().to_string()];
        parts.extend(self.architecture_spec.core_ideas.iter().map(|s| s.trim().to_string()));
        parts.retain(|p| !p.is_empty());
        parts.join("\n")
    }
}

/// Root-mode batch reply: all proposals from one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootIdeas {
    pub ideas: Vec<BrainstormEnvelope>,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisUpdate {
    pub hyp_id: HypId,
    pub evidence_type: EvidenceType,
    pub strength: f64,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteUpdate {
    pub hyp_id: HypId,
    pub common_failure: String,
    pub recommended_practice: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEnvelope {
    /// Role name of the producing agent; filled in by the caller.
    #[serde(default)]
    pub agent: String,
    pub reasoning: String,
    #[serde(default)]
    pub actionable_feedback: String,
    pub hypothesis_updates: Vec<HypothesisUpdate>,
    #[serde(default)]
    pub new_hypotheses: Vec<HypothesisDraft>,
    #[serde(default)]
    pub implementation_notes: Vec<NoteUpdate>,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SynthesisEnvelope {
    pub hypothesis_updates: Vec<HypothesisUpdate>,
    #[serde(default)]
    pub new_hypotheses: Vec<HypothesisDraft>,
    #[serde(default)]
    pub implementation_notes: Vec<NoteUpdate>,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub model_source: String,
    pub config_source: String,
    pub attempt_index: u32,
}

/// Coder reply; fix mode may omit the config and refine mode the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CodeReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_source: Option<String>,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub novel: bool,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub most_similar_to: Option<NodeId>,
    #[serde(default)]
    pub shared_principles: String,
    #[serde(default)]
    pub new_contribution: String,
}

impl JudgeVerdict {
    pub fn novel(reasoning: impl Into<String>) -> Self {
        Self {
            novel: true,
            reasoning: reasoning.into(),
            most_similar_to: None,
            shared_principles: String::new(),
            new_contribution: String::new(),
        }
    }
}

/// Any validated agent reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    RootIdeas(RootIdeas),
    Brainstorm(BrainstormEnvelope),
    Code(CodeReply),
    Feedback(FeedbackEnvelope),
    Synthesis(SynthesisEnvelope),
    Judge(JudgeVerdict),
}

impl Envelope {
    pub fn to_value(&self) -> Value {
        let v = match self {
            Envelope::RootIdeas(e) => serde_json::to_value(e),
            Envelope::Brainstorm(e) => serde_json::to_value(e),
            Envelope::Code(e) => serde_json::to_value(e),
            Envelope::Feedback(e) => serde_json::to_value(e),
            Envelope::Synthesis(e) => serde_json::to_value(e),
            Envelope::Judge(e) => serde_json::to_value(e),
        };
        v.expect("envelopes always serialize")
    }
}

/// A fully structured draft for tests: `mechanism` should be two or more
/// words not shared with other drafts in the same test.
#[cfg(test)]
pub fn test_draft(mechanism: &str) -> HypothesisDraft {
    HypothesisDraft {
        text: format!(
            "IF {mechanism} is used IN image classifiers, THEN accuracy improves, BECAUSE {mechanism} shapes features. DISPROVED IF accuracy drops."
        ),
        scope: "image classifiers".into(),
        prediction: "accuracy improves".into(),
        falsification_criteria: "accuracy drops".into(),
        tags: vec!["test".into()],
        initial_confidence: Some(0.5),
        ..HypothesisDraft::default()
    }
}
