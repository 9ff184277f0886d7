//! Validation of raw agent replies into envelopes.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::envelopes::{
    BrainstormEnvelope, CodeReply, Envelope, FeedbackEnvelope, HypothesisDraft, HypothesisUpdate,
    JudgeVerdict, RootIdeas, SynthesisEnvelope,
};
use super::roles::AgentRole;

/// Machine-readable failure, also used verbatim as a re-prompt hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseLimits {
    pub k_hyp: usize,
    pub k_synth: usize,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self { k_hyp: 2, k_synth: 2 }
    }
}

/// Drops surrounding prose and markdown fences around the JSON document.
pub fn extract_json(raw: &str) -> &str {
    let trimmed = raw.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        let body = body.trim_end();
        return body.strip_suffix("```").unwrap_or(body).trim();
    }
    if trimmed.starts_with('{') {
        return trimmed;
    }
    match (trimmed.find('{'), trimmed.rfind('}')) {
        (Some(a), Some(b)) if a < b => &trimmed[a..=b],
        _ => trimmed,
    }
}

fn deserialize<T: DeserializeOwned>(raw: &str) -> Result<T, ValidationError> {
    let text = extract_json(raw);
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ValidationError::at(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| ValidationError::at("", e.to_string()))?;
    Ok(value)
}

fn check_unit(path: String, v: f64) -> Result<(), ValidationError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ValidationError::at(path, format!("{v} outside [0, 1]")))
    }
}

fn check_drafts(prefix: &str, drafts: &[HypothesisDraft], cap: Option<usize>) -> Result<(), ValidationError> {
    if let Some(cap) = cap {
        if drafts.len() > cap {
            return Err(ValidationError::at(
                format!("{prefix}new_hypotheses"),
                format!("{} drafts exceed the cap of {cap}", drafts.len()),
            ));
        }
    }
    for (i, d) in drafts.iter().enumerate() {
        if d.text.trim().is_empty() {
            return Err(ValidationError::at(format!("{prefix}new_hypotheses[{i}].text"), "empty"));
        }
        if let Some(c) = d.initial_confidence {
            check_unit(format!("{prefix}new_hypotheses[{i}].initial_confidence"), c)?;
        }
    }
    Ok(())
}

fn check_updates(updates: &[HypothesisUpdate], unique: bool) -> Result<(), ValidationError> {
    let mut seen = BTreeSet::new();
    for (i, u) in updates.iter().enumerate() {
        check_unit(format!("hypothesis_updates[{i}].strength"), u.strength)?;
        if unique && !seen.insert(u.hyp_id) {
            return Err(ValidationError::at(
                format!("hypothesis_updates[{i}].hyp_id"),
                format!("{} updated more than once", u.hyp_id),
            ));
        }
    }
    Ok(())
}

fn check_brainstorm(prefix: &str, e: &BrainstormEnvelope, limits: ParseLimits) -> Result<(), ValidationError> {
    if e.title.trim().is_empty() {
        return Err(ValidationError::at(format!("{prefix}title"), "empty"));
    }
    check_drafts(prefix, &e.new_hypotheses, Some(limits.k_hyp))
}

fn nonempty(path: &str, v: &Option<String>) -> Result<(), ValidationError> {
    match v {
        Some(s) if !s.trim().is_empty() => Ok(()),
        _ => Err(ValidationError::at(path, "required and nonempty")),
    }
}

pub fn parse_envelope(raw: &str, role: AgentRole, limits: ParseLimits) -> Result<Envelope, ValidationError> {
    match role {
        AgentRole::IdeaRoot => {
            let e: RootIdeas = deserialize(raw)?;
            if e.ideas.is_empty() {
                return Err(ValidationError::at("ideas", "no ideas"));
            }
            for (i, idea) in e.ideas.iter().enumerate() {
                check_brainstorm(&format!("ideas[{i}]."), idea, limits)?;
            }
            Ok(Envelope::RootIdeas(e))
        }
        AgentRole::IdeaEvolve => {
            let e: BrainstormEnvelope = deserialize(raw)?;
            check_brainstorm("", &e, limits)?;
            Ok(Envelope::Brainstorm(e))
        }
        AgentRole::CoderInit | AgentRole::CoderFix | AgentRole::CoderRefine => {
            let e: CodeReply = deserialize(raw)?;
            match role {
                AgentRole::CoderInit => {
                    nonempty("model_source", &e.model_source)?;
                    nonempty("config_source", &e.config_source)?;
                }
                AgentRole::CoderFix => nonempty("model_source", &e.model_source)?,
                _ => nonempty("config_source", &e.config_source)?,
            }
            Ok(Envelope::Code(e))
        }
        AgentRole::FeedbackQuant | AgentRole::FeedbackQual | AgentRole::FeedbackCausal | AgentRole::FeedbackDiag => {
            let mut e: FeedbackEnvelope = deserialize(raw)?;
            check_updates(&e.hypothesis_updates, false)?;
            check_drafts("", &e.new_hypotheses, None)?;
            if e.agent.is_empty() {
                e.agent = role.name().to_string();
            }
            Ok(Envelope::Feedback(e))
        }
        AgentRole::Synthesis => {
            let e: SynthesisEnvelope = deserialize(raw)?;
            check_updates(&e.hypothesis_updates, true)?;
            check_drafts("", &e.new_hypotheses, Some(limits.k_synth))?;
            Ok(Envelope::Synthesis(e))
        }
        AgentRole::Judge => {
            let e: JudgeVerdict = deserialize(raw)?;
            if !e.novel && e.most_similar_to.is_none() {
                return Err(ValidationError::at("most_similar_to", "required when novel is false"));
            }
            Ok(Envelope::Judge(e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::envelopes::{Extras, NoteUpdate};
    use crate::ids::{HypId, NodeId};
    use crate::memory::EvidenceType;
    use proptest::prelude::*;
    use serde_json::json;

    fn synthesis_doc(drafts: usize, strength: f64) -> String {
        let d: Vec<_> = (0..drafts)
            .map(|i| json!({"text": format!("IF x{i} THEN y BECAUSE z. DISPROVED IF w"), "tags": ["t"]}))
            .collect();
        json!({
            "hypothesis_updates": [{"hyp_id": "hyp_3", "evidence_type": "supports", "strength": strength, "reasoning": "r"}],
            "new_hypotheses": d,
            "implementation_notes": []
        })
        .to_string()
    }

    #[test]
    fn valid_synthesis() {
        let env = parse_envelope(&synthesis_doc(1, 0.7), AgentRole::Synthesis, ParseLimits::default()).unwrap();
        let Envelope::Synthesis(s) = env else { panic!() };
        assert_eq!(s.hypothesis_updates[0].hyp_id, HypId(3));
        assert_eq!(s.hypothesis_updates[0].evidence_type, EvidenceType::Supports);
    }

    #[test]
    fn strength_out_of_range_names_path() {
        let err = parse_envelope(&synthesis_doc(0, 1.7), AgentRole::Synthesis, ParseLimits::default()).unwrap_err();
        assert_eq!(err.path, "hypothesis_updates[0].strength");
    }

    #[test]
    fn synthesis_draft_cap() {
        let err = parse_envelope(&synthesis_doc(3, 0.5), AgentRole::Synthesis, ParseLimits::default()).unwrap_err();
        assert_eq!(err.path, "new_hypotheses");
    }

    #[test]
    fn structural_errors_carry_paths() {
        let raw = r#"{"hypothesis_updates": [{"hyp_id": "node_3", "evidence_type": "supports", "strength": 0.5}]}"#;
        let err = parse_envelope(raw, AgentRole::Synthesis, ParseLimits::default()).unwrap_err();
        assert_eq!(err.path, "hypothesis_updates[0].hyp_id");
        let err = parse_envelope("not json at all", AgentRole::Judge, ParseLimits::default()).unwrap_err();
        assert!(!err.message.is_empty());
    }

    #[test]
    fn fences_and_not_testable() {
        let raw = "Here you go:\n```json\n{\"reasoning\": \"slow\", \"hypothesis_updates\": [{\"hyp_id\": \"hyp_1\", \"evidence_type\": \"not_testable\", \"strength\": 0.2}]}\n```";
        let Envelope::Feedback(f) = parse_envelope(raw, AgentRole::FeedbackDiag, ParseLimits::default()).unwrap() else {
            panic!()
        };
        assert_eq!(f.agent, "feedback_diag");
        assert_eq!(f.hypothesis_updates[0].evidence_type, EvidenceType::Neutral);
    }

    #[test]
    fn unknown_fields_are_kept() {
        let raw = r#"{"novel": true, "reasoning": "new", "confidence_note": {"a": 1}}"#;
        let raw_fb = r#"{"reasoning": "r", "hypothesis_updates": [], "problematic_component": "attn"}"#;
        let Envelope::Feedback(f) = parse_envelope(raw_fb, AgentRole::FeedbackDiag, ParseLimits::default()).unwrap() else {
            panic!()
        };
        assert_eq!(f.extras["problematic_component"], json!("attn"));
        assert!(parse_envelope(raw, AgentRole::Judge, ParseLimits::default()).is_ok());
    }

    #[test]
    fn duplicate_verdict_needs_target() {
        let raw = r#"{"novel": false, "reasoning": "same"}"#;
        assert_eq!(
            parse_envelope(raw, AgentRole::Judge, ParseLimits::default()).unwrap_err().path,
            "most_similar_to"
        );
        let raw = r#"{"novel": false, "reasoning": "same", "most_similar_to": "node_4"}"#;
        let Envelope::Judge(j) = parse_envelope(raw, AgentRole::Judge, ParseLimits::default()).unwrap() else {
            panic!()
        };
        assert_eq!(j.most_similar_to, Some(NodeId(4)));
    }

    #[test]
    fn coder_modes() {
        let lim = ParseLimits::default();
        assert!(parse_envelope(r#"{"model_source": "m"}"#, AgentRole::CoderFix, lim).is_ok());
        assert!(parse_envelope(r#"{"model_source": "m"}"#, AgentRole::CoderInit, lim).is_err());
        assert!(parse_envelope(r#"{"config_source": "c"}"#, AgentRole::CoderRefine, lim).is_ok());
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,8}( [a-z]{1,8}){0,4}"
    }

    fn unit() -> impl Strategy<Value = f64> {
        (0u32..=1000).prop_map(|v| v as f64 / 1000.0)
    }

    fn extras() -> impl Strategy<Value = Extras> {
        proptest::collection::btree_map("x_[a-z]{1,6}", word().prop_map(serde_json::Value::String), 0..3)
    }

    fn draft() -> impl Strategy<Value = HypothesisDraft> {
        (word(), word(), proptest::collection::vec(word(), 0..3), proptest::option::of(unit()), extras()).prop_map(
            |(text, scope, tags, c, extras)| HypothesisDraft {
                text,
                scope,
                tags,
                initial_confidence: c,
                extras,
                ..HypothesisDraft::default()
            },
        )
    }

    fn update() -> impl Strategy<Value = HypothesisUpdate> {
        (0u32..50, 0usize..3, unit(), word()).prop_map(|(id, t, strength, reasoning)| HypothesisUpdate {
            hyp_id: HypId(id),
            evidence_type: [EvidenceType::Supports, EvidenceType::Contradicts, EvidenceType::Neutral][t],
            strength,
            reasoning,
        })
    }

    proptest! {
        #[test]
        fn feedback_round_trip(
            reasoning in word(),
            updates in proptest::collection::vec(update(), 0..4),
            drafts in proptest::collection::vec(draft(), 0..3),
            ex in extras(),
        ) {
            let env = FeedbackEnvelope {
                agent: "feedback_quant".into(),
                reasoning,
                actionable_feedback: String::new(),
                hypothesis_updates: updates,
                new_hypotheses: drafts,
                implementation_notes: vec![NoteUpdate { hyp_id: HypId(1), common_failure: "oom".into(), recommended_practice: "shrink".into() }],
                extras: ex,
            };
            let raw = serde_json::to_string(&env).unwrap();
            let back = parse_envelope(&raw, AgentRole::FeedbackQuant, ParseLimits::default()).unwrap();
            prop_assert_eq!(back, Envelope::Feedback(env));
        }

        #[test]
        fn synthesis_round_trip(
            ids in proptest::collection::btree_set(0u32..50, 0..4),
            drafts in proptest::collection::vec(draft(), 0..=2),
            s in unit(),
        ) {
            let env = SynthesisEnvelope {
                hypothesis_updates: ids.into_iter().map(|i| HypothesisUpdate { hyp_id: HypId(i), evidence_type: EvidenceType::Contradicts, strength: s, reasoning: String::new() }).collect(),
                new_hypotheses: drafts,
                implementation_notes: vec![],
                extras: Extras::new(),
            };
            let raw = serde_json::to_string_pretty(&env).unwrap();
            let back = parse_envelope(&raw, AgentRole::Synthesis, ParseLimits::default()).unwrap();
            prop_assert_eq!(back, Envelope::Synthesis(env));
        }

        #[test]
        fn brainstorm_and_judge_round_trip(title in word(), drafts in proptest::collection::vec(draft(), 0..=2), novel in any::<bool>(), target in 0u32..10) {
            let mut b = BrainstormEnvelope::titled(&title);
            b.new_hypotheses = drafts;
            b.existing_hypotheses = vec![HypId(target)];
            b.architecture_spec.core_ideas = vec![title.clone()];
            let raw = serde_json::to_string(&b).unwrap();
            prop_assert_eq!(parse_envelope(&raw, AgentRole::IdeaEvolve, ParseLimits::default()).unwrap(), Envelope::Brainstorm(b));

            let j = JudgeVerdict { novel, reasoning: title, most_similar_to: Some(NodeId(target)), shared_principles: String::new(), new_contribution: String::new() };
            let raw = serde_json::to_string(&j).unwrap();
            prop_assert_eq!(parse_envelope(&raw, AgentRole::Judge, ParseLimits::default()).unwrap(), Envelope::Judge(j));
        }
    }
}
