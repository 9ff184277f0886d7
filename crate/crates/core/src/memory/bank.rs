//! The hypothesis memory bank.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::confidence::{
    update_confidence, EvidenceType, HypothesisStatus, StatusThresholds, INITIAL_CONFIDENCE,
};
use super::MemoryError;
use crate::agents::envelopes::{EffectSign, HypothesisDraft};
use crate::agents::gate::quality_gate;
use crate::ids::{HypId, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub node_id: NodeId,
    pub evidence_type: EvidenceType,
    pub strength: f64,
    pub reasoning: String,
    pub agent: String,
    /// True when the node actually tested this hypothesis and ran.
    #[serde(default)]
    pub from_experiment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplementationNote {
    pub common_failure: String,
    pub recommended_practice: String,
    pub frequency: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: HypId,
    pub text: String,
    pub scope: String,
    pub prediction: String,
    pub falsification_criteria: String,
    pub tags: Vec<String>,
    pub confidence: f64,
    pub times_tested: u32,
    pub evidence_log: Vec<EvidenceEntry>,
    pub implementation_notes: Vec<ImplementationNote>,
    pub connected: Vec<HypId>,
    pub created_by: String,
    pub source_node: Option<NodeId>,
    pub initial_confidence: f64,
    pub predicted_effect: EffectSign,
    pub created_iteration: u32,
}

impl Hypothesis {
    pub fn supporting_weight(&self) -> f64 {
        self.weight_of(EvidenceType::Supports)
    }

    pub fn contradicting_weight(&self) -> f64 {
        self.weight_of(EvidenceType::Contradicts)
    }

    fn weight_of(&self, kind: EvidenceType) -> f64 {
        self.evidence_log
            .iter()
            .filter(|e| e.evidence_type == kind)
            .map(|e| e.strength)
            .sum()
    }

    /// Adds a note, bumping the frequency of an exact duplicate instead.
    pub fn add_note(&mut self, common_failure: &str, recommended_practice: &str) {
        if let Some(note) = self.implementation_notes.iter_mut().find(|n| {
            n.common_failure == common_failure && n.recommended_practice == recommended_practice
        }) {
            note.frequency += 1;
        } else {
            self.implementation_notes.push(ImplementationNote {
                common_failure: common_failure.to_string(),
                recommended_practice: recommended_practice.to_string(),
                frequency: 1,
            });
        }
    }
}

/// Provenance attached to an admitted hypothesis.
#[derive(Debug, Clone)]
pub struct Admission<'a> {
    pub created_by: &'a str,
    pub source_node: Option<NodeId>,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct HypothesisBank {
    pub hypotheses: BTreeMap<HypId, Hypothesis>,
    pub next_id: u32,
    #[serde(default)]
    pub thresholds: StatusThresholds,
}

impl HypothesisBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_thresholds(thresholds: StatusThresholds) -> Self {
        Self {
            thresholds,
            ..Self::default()
        }
    }

    pub fn get(&self, id: HypId) -> Result<&Hypothesis, MemoryError> {
        self.hypotheses.get(&id).ok_or(MemoryError::HypothesisNotFound(id))
    }

    pub fn get_mut(&mut self, id: HypId) -> Result<&mut Hypothesis, MemoryError> {
        self.hypotheses.get_mut(&id).ok_or(MemoryError::HypothesisNotFound(id))
    }

    pub fn contains(&self, id: HypId) -> bool {
        self.hypotheses.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.values()
    }

    pub fn status(&self, id: HypId) -> Result<HypothesisStatus, MemoryError> {
        Ok(self.thresholds.classify(self.get(id)?.confidence))
    }

    /// Runs the quality gate and, on pass, stores the draft under the next id.
    pub fn admit(&mut self, draft: &HypothesisDraft, admission: Admission<'_>) -> Result<HypId, MemoryError> {
        let verdict = quality_gate(draft, self);
        if !verdict.pass {
            return Err(MemoryError::Rejected {
                failed: verdict.failed_dimensions(),
            });
        }
        let draft = draft.normalized();
        let initial = match draft.initial_confidence {
            Some(c) if (0.25..=0.75).contains(&c) => c,
            _ => INITIAL_CONFIDENCE,
        };
        let id = HypId(self.next_id);
        self.next_id += 1;
        let mut connected: Vec<HypId> = draft
            .connected_hypotheses
            .iter()
            .copied()
            .filter(|h| self.hypotheses.contains_key(h))
            .collect();
        connected.sort();
        connected.dedup();
        // connections are bidirectional
        for other in &connected {
            if let Some(h) = self.hypotheses.get_mut(other) {
                if !h.connected.contains(&id) {
                    h.connected.push(id);
                }
            }
        }
        self.hypotheses.insert(
            id,
            Hypothesis {
                id,
                text: draft.text.clone(),
                scope: draft.scope.clone(),
                prediction: draft.prediction.clone(),
                falsification_criteria: draft.falsification_criteria.clone(),
                tags: draft.tags.clone(),
                confidence: initial,
                times_tested: 0,
                evidence_log: Vec::new(),
                implementation_notes: Vec::new(),
                connected,
                created_by: admission.created_by.to_string(),
                source_node: admission.source_node,
                initial_confidence: initial,
                predicted_effect: draft.effect_sign(),
                created_iteration: admission.iteration,
            },
        );
        Ok(id)
    }

    /// Applies one evidence entry: confidence update, log append, and the
    /// usage count when the entry comes from an executed experiment.
    pub fn record_evidence(&mut self, id: HypId, entry: EvidenceEntry, eta: f64) -> Result<f64, MemoryError> {
        let hyp = self.get_mut(id)?;
        let updated = update_confidence(hyp.confidence, entry.evidence_type, entry.strength, eta)?;
        hyp.confidence = updated;
        if entry.from_experiment {
            hyp.times_tested += 1;
        }
        hyp.evidence_log.push(entry);
        Ok(updated)
    }
}

/// Free-function form of [`HypothesisBank::admit`].
pub fn admit_hypothesis(
    bank: &mut HypothesisBank,
    draft: &HypothesisDraft,
    admission: Admission<'_>,
) -> Result<HypId, MemoryError> {
    bank.admit(draft, admission)
}

/// Free-function form of [`HypothesisBank::record_evidence`].
pub fn record_evidence(
    bank: &mut HypothesisBank,
    id: HypId,
    entry: EvidenceEntry,
    eta: f64,
) -> Result<f64, MemoryError> {
    bank.record_evidence(id, entry, eta)
}
