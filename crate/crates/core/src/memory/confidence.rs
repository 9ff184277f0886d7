//! Confidence dynamics for a single hypothesis.

use serde::{Deserialize, Serialize};

use super::MemoryError;

pub const CONFIDENCE_MIN: f64 = 0.01;
pub const CONFIDENCE_MAX: f64 = 0.99;
pub const INITIAL_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceType {
    Supports,
    Contradicts,
    /// Also accepts the diagnostic agent's `not_testable`.
    #[serde(alias = "not_testable")]
    Neutral,
}

impl EvidenceType {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceType::Supports => "supports",
            EvidenceType::Contradicts => "contradicts",
            EvidenceType::Neutral => "neutral",
        }
    }
}

/// Moves `c` toward 1 on support and toward 0 on contradiction, proportionally
/// to the remaining headroom, then clamps to `[0.01, 0.99]`.
pub fn update_confidence(c: f64, evidence: EvidenceType, w: f64, eta: f64) -> Result<f64, MemoryError> {
    if !(CONFIDENCE_MIN..=CONFIDENCE_MAX).contains(&c) {
        return Err(MemoryError::ContractViolation(format!(
            "confidence {c} outside [{CONFIDENCE_MIN}, {CONFIDENCE_MAX}]"
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(MemoryError::ContractViolation(format!("strength {w} outside [0, 1]")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(MemoryError::ContractViolation(format!("learning rate {eta} outside (0, 1]")));
    }
    let raw = match evidence {
        EvidenceType::Supports => c + eta * w * (1.0 - c),
        EvidenceType::Contradicts => c - eta * w * c,
        EvidenceType::Neutral => c,
    };
    Ok(raw.clamp(CONFIDENCE_MIN, CONFIDENCE_MAX))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisStatus {
    Confirmed,
    Refuted,
    Uncertain,
}

/// Strict thresholds separating confirmed / uncertain / refuted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusThresholds {
    pub confirmed_above: f64,
    pub refuted_below: f64,
}

impl Default for StatusThresholds {
    fn default() -> Self {
        Self {
            confirmed_above: 0.75,
            refuted_below: 0.25,
        }
    }
}

impl StatusThresholds {
    pub fn classify(&self, c: f64) -> HypothesisStatus {
        if c > self.confirmed_above {
            HypothesisStatus::Confirmed
        } else if c < self.refuted_below {
            HypothesisStatus::Refuted
        } else {
            HypothesisStatus::Uncertain
        }
    }
}

pub fn classify_status(c: f64) -> HypothesisStatus {
    StatusThresholds::default().classify(c)
}
