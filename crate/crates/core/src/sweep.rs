//! Strategy comparison on the synthetic landscape: every strategy runs the
//! same seeds, and the table reports final best fitness per seed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{build_components, Discovery, DiscoveryConfig, ExecutorKind, OrchestratorError};
use crate::selection::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    /// Final best accuracy per seed, in seed order.
    pub finals: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Seeds on which this strategy had the highest final (ties shared).
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub seeds: Vec<u64>,
    pub iterations: u32,
    pub rows: Vec<StrategyRow>,
}

impl SweepTable {
    pub fn row(&self, strategy: Strategy) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    /// Tab-separated text, one line per strategy.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("strategy\tmean\tsd\twins\tseeds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{}\t{}\n",
                r.strategy,
                r.mean,
                r.sd,
                r.wins,
                self.seeds.len()
            ));
        }
        out
    }
}

/// Final best accuracy of one simulated run.
pub fn run_once(base: &DiscoveryConfig, strategy: Strategy, seed: u64, workspace: &Path) -> Result<f64, OrchestratorError> {
    let config = DiscoveryConfig {
        strategy,
        seed,
        executor_kind: ExecutorKind::Sim,
        ..base.clone()
    };
    let components = build_components(&config)?;
    let (mut d, _) = Discovery::init_run(config, components, workspace.to_path_buf())?;
    d.run()?;
    Ok(d.state.tree.best_accuracy())
}

/// Runs every (strategy, seed) pair, seeds in parallel threads.
pub fn sweep(
    base: &DiscoveryConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    workspace: &Path,
) -> Result<SweepTable, OrchestratorError> {
    let results: Vec<Result<Vec<f64>, OrchestratorError>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    strategies
                        .iter()
                        .map(|&st| run_once(base, st, seed, workspace))
                        .collect::<Result<Vec<f64>, _>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut by_strategy: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut wins = vec![0usize; strategies.len()];
    for per_seed in results {
        let per_seed = per_seed?;
        let best = per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in per_seed.iter().enumerate() {
            by_strategy.entry(i).or_default().push(*v);
            wins[i] += (*v == best) as usize;
        }
    }
    let rows = strategies
        .iter()
        .enumerate()
        .map(|(i, &strategy)| {
            let finals = by_strategy.remove(&i).unwrap_or_default();
            let n = finals.len().max(1) as f64;
            let mean = finals.iter().sum::<f64>() / n;
            let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            StrategyRow {
                strategy,
                finals,
                mean,
                sd: var.sqrt(),
                wins: wins[i],
            }
        })
        .collect();
    Ok(SweepTable {
        seeds: seeds.to_vec(),
        iterations: base.iterations,
        rows,
    })
}
