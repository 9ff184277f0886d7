//! Synthetic fitness landscape standing in for GPU training.
//!
//! A node's latent fitness is its root's fitness plus the effects of every
//! hypothesis tested along its lineage, clamped after each step. Observed
//! accuracy adds one Gaussian draw per execution; the noise is not inherited.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sanity_verdict_curve, ExecutionRequest, Executor, LineageInfo, SanityVerdict};
use crate::ids::{HypId, NodeId};
use crate::memory::{ExperimentOutcome, RunStatus};
use crate::rng::{derived_rng, RunRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("hypothesis {0} has no effect in the landscape")]
    UnknownHypothesis(HypId),
    #[error("root {0} has no fitness in the landscape")]
    UnknownRoot(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    pub hypothesis_effects: BTreeMap<HypId, f64>,
    /// Extra training seconds a hypothesis costs; absent means free.
    #[serde(default)]
    pub hypothesis_costs: BTreeMap<HypId, f64>,
    pub noise_sd: f64,
    pub root_fitnesses: BTreeMap<NodeId, f64>,
    pub floor: f64,
    pub ceiling: f64,
    pub epochs: u32,
    pub base_wall_s: f64,
}

/// Fraction of final accuracy reached after `epoch` of `total` epochs.
fn progress(epoch: u32, total: u32) -> f64 {
    let k = 3.0;
    (1.0 - (-(epoch as f64) / k).exp()) / (1.0 - (-(total as f64) / k).exp())
}

impl SyntheticLandscape {
    pub fn flat(noise_sd: f64) -> Self {
        Self {
            hypothesis_effects: BTreeMap::new(),
            hypothesis_costs: BTreeMap::new(),
            noise_sd,
            root_fitnesses: BTreeMap::new(),
            floor: 0.05,
            ceiling: 0.99,
            epochs: 20,
            base_wall_s: 600.0,
        }
    }

    /// Random landscape: hypothesis effects are mostly small with a few
    /// strong winners and losers; roots start in a mediocre band.
    pub fn generate(n_hyps: usize, n_roots: usize, noise_sd: f64, seed: u64) -> Self {
        let mut rng = derived_rng(seed, &["landscape"]);
        let effect = Normal::new(0.0, 0.04).expect("valid normal");
        let mut out = Self::flat(noise_sd);
        for i in 0..n_hyps {
            out.hypothesis_effects.insert(HypId(i as u32), effect.sample(&mut rng));
        }
        for r in 0..n_roots {
            out.root_fitnesses.insert(NodeId(r as u32), rng.random_range(0.30..0.55));
        }
        out
    }

    pub fn clamp(&self, f: f64) -> f64 {
        f.clamp(self.floor, self.ceiling)
    }

    pub fn effect_sum(&self, hyps: &[HypId]) -> Result<f64, SimError> {
        hyps.iter()
            .map(|h| self.hypothesis_effects.get(h).copied().ok_or(SimError::UnknownHypothesis(*h)))
            .sum()
    }

    /// Noise-free fitness at the end of `ancestor_tests` starting from `root`.
    pub fn latent_fitness(&self, root: NodeId, ancestor_tests: &[Vec<HypId>]) -> Result<f64, SimError> {
        let mut f = *self.root_fitnesses.get(&root).ok_or(SimError::UnknownRoot(root))?;
        for tests in ancestor_tests {
            f = self.clamp(f + self.effect_sum(tests)?);
        }
        Ok(f)
    }

    fn wall_time(&self, fitness: f64, hyps: &[HypId]) -> f64 {
        let cost: f64 = hyps.iter().filter_map(|h| self.hypothesis_costs.get(h)).sum();
        self.base_wall_s * (0.8 + 0.4 * fitness) + cost
    }

    fn curve(&self, fitness: f64, epochs: u32) -> Vec<(u32, f64)> {
        (1..=epochs).map(|e| (e, fitness * progress(e, self.epochs))).collect()
    }
}

/// Runs one simulated training job with the given time and sanity budgets.
pub fn simulate_run(
    landscape: &SyntheticLandscape,
    parent_fitness: f64,
    hyp_ids: &[HypId],
    rng: &mut RunRng,
    timeout_s: f64,
    sanity_epochs: u32,
    sanity_floor: f64,
) -> Result<ExperimentOutcome, SimError> {
    let mut out = run_from(landscape, parent_fitness, hyp_ids, rng, timeout_s, sanity_epochs, sanity_floor)?;
    out.reference_fitness = Some(parent_fitness);
    Ok(out)
}

fn run_from(
    landscape: &SyntheticLandscape,
    parent_fitness: f64,
    hyp_ids: &[HypId],
    rng: &mut RunRng,
    timeout_s: f64,
    sanity_epochs: u32,
    sanity_floor: f64,
) -> Result<ExperimentOutcome, SimError> {
    let delta = landscape.effect_sum(hyp_ids)?;
    let noise = if landscape.noise_sd > 0.0 {
        Normal::new(0.0, landscape.noise_sd).expect("valid normal").sample(rng)
    } else {
        0.0
    };
    let fitness = landscape.clamp(parent_fitness + delta + noise);
    let wall = landscape.wall_time(fitness, hyp_ids);
    let total = landscape.epochs;

    let sanity_len = sanity_epochs.min(total);
    let prefix = landscape.curve(fitness, sanity_len);
    if sanity_verdict_curve(&prefix, sanity_floor, sanity_epochs) == SanityVerdict::Abort {
        let spent = wall * sanity_len as f64 / total as f64;
        let mut out = ExperimentOutcome::failed(
            format!("sanity: first {sanity_epochs} epochs below accuracy floor {sanity_floor}"),
            spent.min(timeout_s),
        );
        out.accuracy_curve = prefix;
        return Ok(out);
    }
    if wall > timeout_s {
        let done = ((total as f64) * timeout_s / wall).floor() as u32;
        return Ok(ExperimentOutcome::timeout(landscape.curve(fitness, done), timeout_s));
    }
    let mut out = ExperimentOutcome::success(landscape.curve(fitness, total), wall);
    out.best_accuracy = fitness;
    out.param_count = Some(1_000_000 + (fitness * 4_000_000.0) as u64);
    debug_assert_eq!(out.status, RunStatus::Success);
    Ok(out)
}

/// `clamp(parent_fitness + Σδ + N(0, noise_sd))` under default budgets.
pub fn simulate_execute(
    landscape: &SyntheticLandscape,
    parent_fitness: f64,
    hyp_ids: &[HypId],
    rng: &mut RunRng,
) -> Result<ExperimentOutcome, SimError> {
    simulate_run(
        landscape,
        parent_fitness,
        hyp_ids,
        rng,
        super::DEFAULT_TIMEOUT_S,
        0,
        super::DEFAULT_SANITY_FLOOR,
    )
}

#[derive(Debug, Clone)]
pub struct SimExecutor {
    pub landscape: SyntheticLandscape,
}

impl SimExecutor {
    pub fn new(landscape: SyntheticLandscape) -> Self {
        Self { landscape }
    }
}

impl Executor for SimExecutor {
    fn execute(&mut self, request: &ExecutionRequest, lineage: &LineageInfo, rng: &mut RunRng) -> ExperimentOutcome {
        if !request.artifact.model_source.contains("class Model") {
            return ExperimentOutcome::failed("crash: NameError: model.py does not define Model", 3.0);
        }
        let Some(root) = lineage.root else {
            return ExperimentOutcome::failed("sim: lineage has no root", 0.0);
        };
        let run = self
            .landscape
            .latent_fitness(root, &lineage.ancestor_tests)
            .and_then(|parent| {
                simulate_run(
                    &self.landscape,
                    parent,
                    &lineage.tested,
                    rng,
                    request.timeout_s,
                    request.sanity_epochs,
                    request.sanity_floor,
                )
            });
        run.unwrap_or_else(|e| ExperimentOutcome::failed(format!("sim: {e}"), 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_rng;

    fn land(effects: &[(u32, f64)], noise: f64) -> SyntheticLandscape {
        let mut l = SyntheticLandscape::flat(noise);
        for &(id, d) in effects {
            l.hypothesis_effects.insert(HypId(id), d);
        }
        l
    }

    #[test]
    fn noise_free_additivity() {
        let l = land(&[(0, 0.1), (1, -0.2), (2, 0.2)], 0.0);
        let mut rng = run_rng(0);
        let a = simulate_execute(&l, 0.5, &[HypId(0)], &mut rng).unwrap();
        assert!((a.best_accuracy - 0.6).abs() < 1e-12);
        let b = simulate_execute(&l, 0.5, &[HypId(1)], &mut rng).unwrap();
        assert!((b.best_accuracy - 0.3).abs() < 1e-12);
        let c = simulate_execute(&l, 0.95, &[HypId(2)], &mut rng).unwrap();
        assert_eq!(c.best_accuracy, 0.99);
        assert!(a.check_invariants().is_ok());
    }

    #[test]
    fn zero_noise_consumes_no_randomness() {
        let l = land(&[(0, 0.1)], 0.0);
        let mut rng = run_rng(3);
        let before = rng.clone();
        simulate_execute(&l, 0.5, &[HypId(0)], &mut rng).unwrap();
        assert_eq!(rng, before);
    }

    #[test]
    fn unknown_hypothesis() {
        let l = land(&[], 0.0);
        assert_eq!(
            simulate_execute(&l, 0.5, &[HypId(9)], &mut run_rng(0)).unwrap_err(),
            SimError::UnknownHypothesis(HypId(9))
        );
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let l = land(&[(0, 0.05)], 0.02);
        let a = simulate_execute(&l, 0.5, &[HypId(0)], &mut run_rng(11)).unwrap();
        let b = simulate_execute(&l, 0.5, &[HypId(0)], &mut run_rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expensive_hypothesis_times_out() {
        let mut l = land(&[(0, 0.0)], 0.0);
        l.hypothesis_costs.insert(HypId(0), 5000.0);
        let out = simulate_run(&l, 0.5, &[HypId(0)], &mut run_rng(0), 1800.0, 5, 0.15).unwrap();
        assert_eq!(out.status, RunStatus::Timeout);
        assert!(out.wall_time_s >= 1800.0);
        assert!(!out.accuracy_curve.is_empty());
        assert!(out.check_invariants().is_ok());
    }

    #[test]
    fn hopeless_fitness_fails_sanity() {
        let l = land(&[(0, -0.4)], 0.0);
        let out = simulate_run(&l, 0.5, &[HypId(0)], &mut run_rng(0), 1800.0, 5, 0.15).unwrap();
        assert_eq!(out.status, RunStatus::Failed);
        assert!(out.diagnostic("sanity").is_some());
    }

    #[test]
    fn latent_fitness_walks_lineage() {
        let mut l = land(&[(0, 0.1), (1, 0.6)], 0.0);
        l.root_fitnesses.insert(NodeId(0), 0.4);
        let f = l.latent_fitness(NodeId(0), &[vec![], vec![HypId(0)], vec![HypId(1)]]).unwrap();
        assert_eq!(f, 0.99);
        assert_eq!(l.latent_fitness(NodeId(5), &[]).unwrap_err(), SimError::UnknownRoot(NodeId(5)));
    }

    /// Statistical oracle: the sign of child minus parent agrees with the
    /// sign of the effect with the probability the Gaussian model predicts.
    #[test]
    fn sign_agreement_matches_gaussian_model() {
        let delta = 0.02;
        let sd = 0.02;
        let l = land(&[(0, delta)], sd);
        let mut rng = run_rng(99);
        let n = 10_000;
        let agree = (0..n)
            .filter(|_| simulate_execute(&l, 0.5, &[HypId(0)], &mut rng).unwrap().best_accuracy > 0.5)
            .count() as f64;
        // P(N(delta, sd) > 0) = Phi(1) for delta = sd
        let p = 0.841_344_746_068_542_9;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = agree / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs {p}");
    }

    #[test]
    fn broken_model_crashes() {
        let mut ex = SimExecutor::new(land(&[], 0.0));
        let req = ExecutionRequest {
            workdir: ".".into(),
            artifact: crate::agents::CodeArtifact {
                model_source: "pass".into(),
                config_source: "{}".into(),
                attempt_index: 0,
            },
            timeout_s: 1800.0,
            sanity_epochs: 5,
            sanity_floor: 0.15,
        };
        let out = ex.execute(&req, &LineageInfo::default(), &mut run_rng(0));
        assert!(out.diagnostic("crash").is_some());
    }
}
