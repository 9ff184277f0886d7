//! Deterministic reduction of several feedback envelopes into one synthesis.

use std::collections::BTreeMap;

use super::envelopes::{
    EffectSign, Extras, FeedbackEnvelope, HypothesisDraft, HypothesisUpdate, NoteUpdate, SynthesisEnvelope,
};
use super::gate::NOVELTY_JACCARD;
use super::roles::AgentRole;
use super::text::{jaccard, polarity_split, tokens};
use crate::ids::HypId;
use crate::memory::{EvidenceType, HypothesisBank};

/// Strength given to an update derived from a contradicting draft.
pub const CONTRADICTION_STRENGTH: f64 = 0.5;

struct Vote {
    agent: String,
    kind: EvidenceType,
    strength: f64,
    reasoning: String,
}

fn polarity(sign: EffectSign, negated: bool) -> bool {
    (sign == EffectSign::Positive) != negated
}

/// The banked hypothesis a draft restates with the opposite outcome, if any.
pub fn contradicted_hypothesis(draft: &HypothesisDraft, bank: &HypothesisBank) -> Option<HypId> {
    let (draft_tokens, draft_neg) = polarity_split(&draft.text);
    let draft_pol = polarity(draft.effect_sign(), draft_neg);
    bank.iter().find_map(|h| {
        let (h_tokens, h_neg) = polarity_split(&h.text);
        let similar = jaccard(&draft_tokens, &h_tokens) >= NOVELTY_JACCARD;
        (similar && polarity(h.predicted_effect, h_neg) != draft_pol).then_some(h.id)
    })
}

fn role_priority(agent: &str) -> u8 {
    agent.parse::<AgentRole>().map_or(u8::MAX, AgentRole::draft_priority)
}

pub fn merge_feedback(envelopes: &[FeedbackEnvelope], bank: &HypothesisBank, k_synth: usize) -> SynthesisEnvelope {
    let mut votes: BTreeMap<HypId, Vec<Vote>> = BTreeMap::new();
    for env in envelopes {
        for u in &env.hypothesis_updates {
            if bank.contains(u.hyp_id) {
                votes.entry(u.hyp_id).or_default().push(Vote {
                    agent: env.agent.clone(),
                    kind: u.evidence_type,
                    strength: u.strength,
                    reasoning: u.reasoning.clone(),
                });
            }
        }
    }

    let mut drafts: Vec<(u8, &str, &HypothesisDraft)> = envelopes
        .iter()
        .flat_map(|env| env.new_hypotheses.iter().map(move |d| (role_priority(&env.agent), env.agent.as_str(), d)))
        .collect();
    drafts.sort_by_key(|(p, _, _)| *p);

    let bank_tokens: Vec<_> = bank.iter().map(|h| tokens(&h.text)).collect();
    let mut kept: Vec<HypothesisDraft> = Vec::new();
    for (_, agent, draft) in drafts {
        if let Some(target) = contradicted_hypothesis(draft, bank) {
            votes.entry(target).or_default().push(Vote {
                agent: agent.to_string(),
                kind: EvidenceType::Contradicts,
                strength: CONTRADICTION_STRENGTH,
                reasoning: format!("proposed the opposite outcome: {}", draft.text),
            });
            continue;
        }
        let t = tokens(&draft.text);
        let duplicate = bank_tokens.iter().any(|b| jaccard(&t, b) >= NOVELTY_JACCARD)
            || kept.iter().any(|k| jaccard(&t, &tokens(&k.text)) >= NOVELTY_JACCARD);
        if !duplicate && kept.len() < k_synth {
            kept.push(draft.clone());
        }
    }

    let hypothesis_updates = votes.into_iter().map(|(hyp_id, v)| resolve(hyp_id, &v)).collect();

    let mut implementation_notes: Vec<NoteUpdate> = Vec::new();
    for note in envelopes.iter().flat_map(|e| &e.implementation_notes) {
        if bank.contains(note.hyp_id) && !implementation_notes.contains(note) {
            implementation_notes.push(note.clone());
        }
    }

    SynthesisEnvelope {
        hypothesis_updates,
        new_hypotheses: kept,
        implementation_notes,
        extras: Extras::new(),
    }
}

fn resolve(hyp_id: HypId, votes: &[Vote]) -> HypothesisUpdate {
    let count = |k: EvidenceType| votes.iter().filter(|v| v.kind == k).count();
    let tallies = [
        (EvidenceType::Supports, count(EvidenceType::Supports)),
        (EvidenceType::Contradicts, count(EvidenceType::Contradicts)),
        (EvidenceType::Neutral, count(EvidenceType::Neutral)),
    ];
    let top = tallies.iter().map(|t| t.1).max().unwrap_or(0);
    let leaders: Vec<EvidenceType> = tallies.iter().filter(|t| t.1 == top).map(|t| t.0).collect();
    let kind = if leaders.len() == 1 { leaders[0] } else { EvidenceType::Neutral };
    let same: Vec<f64> = votes.iter().filter(|v| v.kind == kind).map(|v| v.strength).collect();
    let strength = if same.is_empty() {
        0.0
    } else {
        same.iter().sum::<f64>() / same.len() as f64
    };
    let reasoning = votes
        .iter()
        .map(|v| format!("[{}] {}", v.agent, v.reasoning))
        .collect::<Vec<_>>()
        .join(" | ");
    HypothesisUpdate {
        hyp_id,
        evidence_type: kind,
        strength,
        reasoning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::envelopes::test_draft;
    use crate::memory::Admission;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bank(n: usize) -> HypothesisBank {
        let phrases = ["alpha bravo", "charlie delta", "echo foxtrot", "golf hotel", "india juliet", "kilo lima"];
        let mut b = HypothesisBank::new();
        for p in phrases.iter().take(n) {
            b.admit(
                &test_draft(p),
                Admission {
                    created_by: "test",
                    source_node: None,
                    iteration: 0,
                },
            )
            .unwrap();
        }
        b
    }

    fn env(agent: AgentRole, updates: &[(u32, EvidenceType, f64)], drafts: Vec<HypothesisDraft>) -> FeedbackEnvelope {
        FeedbackEnvelope {
            agent: agent.name().into(),
            reasoning: String::new(),
            actionable_feedback: String::new(),
            hypothesis_updates: updates
                .iter()
                .map(|&(id, kind, strength)| HypothesisUpdate {
                    hyp_id: HypId(id),
                    evidence_type: kind,
                    strength,
                    reasoning: "seen".into(),
                })
                .collect(),
            new_hypotheses: drafts,
            implementation_notes: vec![],
            extras: Extras::new(),
        }
    }

    #[test]
    fn agreeing_supports_are_averaged() {
        let b = bank(4);
        let out = merge_feedback(
            &[
                env(AgentRole::FeedbackQuant, &[(3, EvidenceType::Supports, 0.6)], vec![]),
                env(AgentRole::FeedbackCausal, &[(3, EvidenceType::Supports, 0.8)], vec![]),
            ],
            &b,
            2,
        );
        assert_eq!(out.hypothesis_updates.len(), 1);
        let u = &out.hypothesis_updates[0];
        assert_eq!(u.evidence_type, EvidenceType::Supports);
        assert_abs_diff_eq!(u.strength, 0.7, epsilon = 1e-12);
        assert_eq!(u.reasoning, "[feedback_quant] seen | [feedback_causal] seen");
    }

    #[test]
    fn split_vote_is_neutral() {
        let b = bank(6);
        let out = merge_feedback(
            &[
                env(AgentRole::FeedbackQuant, &[(5, EvidenceType::Supports, 0.6)], vec![]),
                env(AgentRole::FeedbackCausal, &[(5, EvidenceType::Contradicts, 0.8)], vec![]),
            ],
            &b,
            2,
        );
        assert_eq!(out.hypothesis_updates[0].evidence_type, EvidenceType::Neutral);
        assert_eq!(out.hypothesis_updates[0].strength, 0.0);
    }

    #[test]
    fn draft_cap_follows_priority() {
        let b = bank(0);
        let out = merge_feedback(
            &[
                env(AgentRole::FeedbackDiag, &[], vec![test_draft("mango papaya")]),
                env(AgentRole::FeedbackQual, &[], vec![test_draft("quartz ruby")]),
                env(AgentRole::FeedbackQuant, &[], vec![test_draft("sierra tango")]),
                env(AgentRole::FeedbackCausal, &[], vec![test_draft("umbra violet")]),
            ],
            &b,
            2,
        );
        let texts: Vec<_> = out.new_hypotheses.iter().map(|d| d.text.clone()).collect();
        assert_eq!(texts, vec![test_draft("umbra violet").text, test_draft("sierra tango").text]);
    }

    #[test]
    fn overlapping_drafts_collapse() {
        let out = merge_feedback(
            &[
                env(AgentRole::FeedbackQuant, &[], vec![test_draft("mango papaya")]),
                env(AgentRole::FeedbackCausal, &[], vec![test_draft("mango papaya")]),
            ],
            &bank(0),
            2,
        );
        assert_eq!(out.new_hypotheses.len(), 1);
    }

    #[test]
    fn negated_draft_becomes_contradiction() {
        let b = bank(2);
        let mut d = test_draft("alpha bravo");
        d.text = d.text.replace("THEN accuracy improves", "THEN accuracy never improves");
        let out = merge_feedback(&[env(AgentRole::FeedbackCausal, &[], vec![d])], &b, 2);
        assert!(out.new_hypotheses.is_empty());
        assert_eq!(out.hypothesis_updates.len(), 1);
        assert_eq!(out.hypothesis_updates[0].hyp_id, HypId(0));
        assert_eq!(out.hypothesis_updates[0].evidence_type, EvidenceType::Contradicts);
        assert_eq!(out.hypothesis_updates[0].strength, CONTRADICTION_STRENGTH);
    }

    #[test]
    fn declared_negative_effect_is_opposite() {
        let b = bank(1);
        let mut d = test_draft("alpha bravo");
        d.predicted_effect = Some(EffectSign::Negative);
        assert_eq!(contradicted_hypothesis(&d, &b), Some(HypId(0)));
        let same = test_draft("alpha bravo");
        assert_eq!(contradicted_hypothesis(&same, &b), None);
    }

    #[test]
    fn unknown_ids_dropped() {
        let out = merge_feedback(
            &[env(AgentRole::FeedbackQuant, &[(42, EvidenceType::Supports, 0.6)], vec![])],
            &bank(1),
            2,
        );
        assert!(out.hypothesis_updates.is_empty());
    }

    fn arb_env() -> impl Strategy<Value = FeedbackEnvelope> {
        let roles = [AgentRole::FeedbackQuant, AgentRole::FeedbackQual, AgentRole::FeedbackCausal, AgentRole::FeedbackDiag];
        let words = ["amber", "basil", "cedar", "dune", "ember", "fjord", "grove", "heath", "iris", "jade"];
        (
            0usize..4,
            proptest::collection::vec((0u32..6, 0usize..3, 0u32..=10), 0..6),
            proptest::collection::vec((0usize..10, 0usize..10), 0..4),
        )
            .prop_map(move |(r, ups, ds)| {
                let kinds = [EvidenceType::Supports, EvidenceType::Contradicts, EvidenceType::Neutral];
                let ups: Vec<_> = ups.into_iter().map(|(i, k, s)| (i, kinds[k], s as f64 / 10.0)).collect();
                let drafts = ds.into_iter().map(|(a, b)| test_draft(&format!("{} {}", words[a], words[b]))).collect();
                env(roles[r], &ups, drafts)
            })
    }

    proptest! {
        #[test]
        fn merged_output_respects_contract(envs in proptest::collection::vec(arb_env(), 1..5)) {
            let b = bank(6);
            let out = merge_feedback(&envs, &b, 2);
            let mut ids: Vec<_> = out.hypothesis_updates.iter().map(|u| u.hyp_id).collect();
            let n = ids.len();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
            prop_assert!(out.new_hypotheses.len() <= 2);
            for u in &out.hypothesis_updates {
                prop_assert!((0.0..=1.0).contains(&u.strength));
            }
        }
    }
}
