use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{MockConfig, ParseLimits};
use crate::executor::{SyntheticLandscape, DEFAULT_SANITY_EPOCHS, DEFAULT_SANITY_FLOOR, DEFAULT_TIMEOUT_S};
use crate::redundancy::DEFAULT_DIM;
use crate::selection::{SelectionWeights, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorKind {
    #[default]
    Sim,
    Subprocess,
}

impl fmt::Display for ExecutorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutorKind::Sim => "sim",
            ExecutorKind::Subprocess => "subprocess",
        })
    }
}

impl FromStr for ExecutorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(ExecutorKind::Sim),
            "subprocess" => Ok(ExecutorKind::Subprocess),
            _ => Err(format!("unknown executor {s:?} (expected sim|subprocess)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgentBackend {
    #[default]
    Mock,
    Llm,
}

impl FromStr for AgentBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(AgentBackend::Mock),
            "llm" => Ok(AgentBackend::Llm),
            _ => Err(format!("unknown agent backend {s:?} (expected mock|llm)")),
        }
    }
}

/// Simulated executor settings. Without an explicit landscape one is
/// generated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub n_hyps: usize,
    pub noise_sd: f64,
    pub landscape: Option<SyntheticLandscape>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n_hyps: 20,
            noise_sd: 0.02,
            landscape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub research_direction: String,
    pub n_roots: usize,
    pub iterations: u32,
    pub weights: SelectionWeights,
    pub r_max: u32,
    pub f_max: u32,
    pub redundancy_retries: u32,
    pub k_hyp: usize,
    pub k_synth: usize,
    pub seed: u64,
    pub executor_kind: ExecutorKind,
    pub strategy: Strategy,
    pub agent_backend: AgentBackend,
    pub llm_model: String,
    pub embedding_model: String,
    pub parse_retries: u32,
    pub novelty_k: usize,
    pub embedding_dim: usize,
    pub timeout_s: f64,
    pub sanity_epochs: u32,
    pub sanity_floor: f64,
    /// Refinement stops once a run gains less than this over the previous one.
    pub refine_plateau: f64,
    pub worker_command: Vec<String>,
    pub mock: MockConfig,
    pub sim: SimSettings,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            research_direction: "compact image classifiers for CIFAR-10".into(),
            n_roots: 5,
            iterations: 50,
            weights: SelectionWeights::default(),
            r_max: 10,
            f_max: 5,
            redundancy_retries: 2,
            k_hyp: 2,
            k_synth: 2,
            seed: 0,
            executor_kind: ExecutorKind::Sim,
            strategy: Strategy::Dual,
            agent_backend: AgentBackend::Mock,
            llm_model: "gpt-5-mini".into(),
            embedding_model: "gemini-embedding-001".into(),
            parse_retries: 3,
            novelty_k: 3,
            embedding_dim: DEFAULT_DIM,
            timeout_s: DEFAULT_TIMEOUT_S,
            sanity_epochs: DEFAULT_SANITY_EPOCHS,
            sanity_floor: DEFAULT_SANITY_FLOOR,
            refine_plateau: 0.002,
            worker_command: vec!["python3".into(), "-m".into(), "train_adapter".into()],
            mock: MockConfig::default(),
            sim: SimSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        self.weights.validate().map_err(ConfigError)?;
        if self.n_roots == 0 {
            return bad("n_roots must be at least 1".into());
        }
        if self.novelty_k == 0 {
            return bad("novelty_k must be at least 1".into());
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive".into());
        }
        if !(self.refine_plateau >= 0.0) {
            return bad("refine_plateau must be nonnegative".into());
        }
        if self.executor_kind == ExecutorKind::Subprocess && self.worker_command.is_empty() {
            return bad("worker_command is empty".into());
        }
        if self.executor_kind == ExecutorKind::Sim {
            let landscape = self.landscape();
            if !(landscape.noise_sd >= 0.0) || !(landscape.floor < landscape.ceiling) {
                return bad("landscape needs noise_sd >= 0 and floor < ceiling".into());
            }
            if landscape.root_fitnesses.len() < self.n_roots {
                return bad(format!(
                    "landscape has {} root fitnesses for {} roots",
                    landscape.root_fitnesses.len(),
                    self.n_roots
                ));
            }
            if self.agent_backend == AgentBackend::Mock && self.mock.pool_size > landscape.hypothesis_effects.len() {
                return bad(format!(
                    "mock pool of {} drafts exceeds the {} landscape effects",
                    self.mock.pool_size,
                    landscape.hypothesis_effects.len()
                ));
            }
        }
        Ok(())
    }

    pub fn landscape(&self) -> SyntheticLandscape {
        self.sim
            .landscape
            .clone()
            .unwrap_or_else(|| SyntheticLandscape::generate(self.sim.n_hyps, self.n_roots, self.sim.noise_sd, self.seed))
    }

    pub fn parse_limits(&self) -> ParseLimits {
        ParseLimits {
            k_hyp: self.k_hyp,
            k_synth: self.k_synth,
        }
    }
}
