use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hyposearch_core::orchestrator::{DiscoveryConfig, ExecutorKind, RunSummary};
use hyposearch_core::persistence::{init_run_dir, load_state, open_run_dir, run_persisted};
use hyposearch_core::reports::{
    calibration_report, export_tree, knowledge_curve, transfer_report, TreeFormat, DEFAULT_BINS, DEFAULT_THRESHOLDS,
};
use hyposearch_core::selection::Strategy;
use hyposearch_core::sweep::sweep;

/// Hypothesis-guided architecture discovery runs, reports and simulations.
#[derive(Parser)]
#[command(name = "hyposearch", version)]
struct Cli {
    /// Directory holding the run's checkpoint, iteration log and workspace.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a run: generate, build and evaluate the root architectures.
    Init {
        #[arg(long)]
        direction: String,
        #[arg(long, default_value_t = 5)]
        roots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        executor: Option<ExecutorKind>,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Iteration budget recorded for later `resume`.
        #[arg(long)]
        iters: Option<u32>,
        /// JSON file with configuration overrides; flags win over it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Continue a run up to an iteration budget.
    Run {
        #[arg(long)]
        iters: Option<u32>,
        #[arg(long)]
        executor: Option<ExecutorKind>,
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Continue a run with the configuration it was saved with.
    Resume,
    /// Print an analysis of the last checkpoint.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Compare selection strategies on the synthetic landscape.
    Simulate {
        #[arg(long, value_delimiter = ',', default_value = "dual,greedy,random,dgm,ee")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 50)]
        iters: u32,
        #[arg(long, default_value_t = 20)]
        hyps: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Emit the full table as JSON instead of TSV.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    Calibration {
        /// Bin edges; the last bin is closed.
        #[arg(long, value_delimiter = ',')]
        bins: Option<Vec<f64>>,
    },
    Transfer,
    Knowledge {
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    Tree {
        #[arg(long, default_value = "dot")]
        format: TreeFormat,
    },
}

fn print_summary(summary: &RunSummary, iteration: u32, best: f64) {
    let stop = if summary.exhausted { " (search exhausted)" } else { "" };
    eprintln!(
        "{} step(s) run, now at iteration {iteration}, best accuracy {best:.4}{stop}",
        summary.reports.len()
    );
}

fn continue_run(run_dir: &Path, adjust: impl FnOnce(&mut DiscoveryConfig)) -> Result<()> {
    let mut d = open_run_dir(run_dir, adjust)?;
    let summary = run_persisted(&mut d, run_dir)?;
    print_summary(&summary, d.state.iteration, d.state.tree.best_accuracy());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let run_dir = cli.run_dir.as_path();
    match cli.command {
        Command::Init {
            direction,
            roots,
            seed,
            executor,
            strategy,
            iters,
            config,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => DiscoveryConfig::default(),
            };
            cfg.research_direction = direction;
            cfg.n_roots = roots;
            cfg.seed = seed;
            if let Some(e) = executor {
                cfg.executor_kind = e;
            }
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(n) = iters {
                cfg.iterations = n;
            }
            let d = init_run_dir(run_dir, cfg)?;
            eprintln!(
                "initialized {} with {} root(s), best accuracy {:.4}",
                run_dir.display(),
                d.state.tree.len(),
                d.state.tree.best_accuracy()
            );
        }
        Command::Run {
            iters,
            executor,
            strategy,
        } => continue_run(run_dir, |cfg| {
            if let Some(n) = iters {
                cfg.iterations = n;
            }
            if let Some(e) = executor {
                cfg.executor_kind = e;
            }
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
        })?,
        Command::Resume => continue_run(run_dir, |_| {})?,
        Command::Report { kind } => {
            let state = load_state(run_dir)?;
            let out = match kind {
                ReportKind::Calibration { bins } => {
                    let bins = bins.unwrap_or_else(|| DEFAULT_BINS.to_vec());
                    serde_json::to_string_pretty(&calibration_report(&state, &bins)?)? + "\n"
                }
                ReportKind::Transfer => serde_json::to_string_pretty(&transfer_report(&state)?)? + "\n",
                ReportKind::Knowledge { thresholds } => {
                    let th = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
                    serde_json::to_string_pretty(&knowledge_curve(&state, &th)?)? + "\n"
                }
                ReportKind::Tree { format } => export_tree(&state, format)?,
            };
            print!("{out}");
        }
        Command::Simulate {
            strategies,
            seeds,
            first_seed,
            iters,
            hyps,
            noise,
            json,
        } => {
            if strategies.is_empty() || seeds == 0 {
                bail!("need at least one strategy and one seed");
            }
            let mut base = DiscoveryConfig {
                iterations: iters,
                ..DiscoveryConfig::default()
            };
            base.sim.n_hyps = hyps;
            base.sim.noise_sd = noise;
            base.mock.pool_size = hyps;
            let seed_list: Vec<u64> = (first_seed..first_seed + seeds).collect();
            // simulated runs never touch their workspace
            let table = sweep(&base, &strategies, &seed_list, &std::env::temp_dir())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.to_tsv());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
