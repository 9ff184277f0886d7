use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const GENERATION_TEMPERATURE: f64 = 0.7;
pub const SYNTHESIS_TEMPERATURE: f64 = 0.3;
pub const JUDGE_TEMPERATURE: f64 = 0.1;
pub const MAX_OUTPUT_TOKENS: u32 = 32_768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    IdeaRoot,
    IdeaEvolve,
    CoderInit,
    CoderFix,
    CoderRefine,
    FeedbackQuant,
    FeedbackQual,
    FeedbackCausal,
    FeedbackDiag,
    Synthesis,
    Judge,
}

impl AgentRole {
    pub const ALL: [AgentRole; 11] = [
        AgentRole::IdeaRoot,
        AgentRole::IdeaEvolve,
        AgentRole::CoderInit,
        AgentRole::CoderFix,
        AgentRole::CoderRefine,
        AgentRole::FeedbackQuant,
        AgentRole::FeedbackQual,
        AgentRole::FeedbackCausal,
        AgentRole::FeedbackDiag,
        AgentRole::Synthesis,
        AgentRole::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::IdeaRoot => "idea_root",
            AgentRole::IdeaEvolve => "idea_evolve",
            AgentRole::CoderInit => "coder_init",
            AgentRole::CoderFix => "coder_fix",
            AgentRole::CoderRefine => "coder_refine",
            AgentRole::FeedbackQuant => "feedback_quant",
            AgentRole::FeedbackQual => "feedback_qual",
            AgentRole::FeedbackCausal => "feedback_causal",
            AgentRole::FeedbackDiag => "feedback_diag",
            AgentRole::Synthesis => "synthesis",
            AgentRole::Judge => "judge",
        }
    }

    pub fn temperature(self) -> f64 {
        match self {
            AgentRole::Synthesis => SYNTHESIS_TEMPERATURE,
            AgentRole::Judge => JUDGE_TEMPERATURE,
            _ => GENERATION_TEMPERATURE,
        }
    }

    pub fn max_output_tokens(self) -> u32 {
        MAX_OUTPUT_TOKENS
    }

    pub fn is_feedback(self) -> bool {
        matches!(
            self,
            AgentRole::FeedbackQuant | AgentRole::FeedbackQual | AgentRole::FeedbackCausal | AgentRole::FeedbackDiag
        )
    }

    /// Draft priority during synthesis; lower wins.
    pub fn draft_priority(self) -> u8 {
        match self {
            AgentRole::FeedbackCausal => 0,
            AgentRole::FeedbackQuant => 1,
            AgentRole::FeedbackQual => 2,
            AgentRole::FeedbackDiag => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown agent role {s:?}"))
    }
}
