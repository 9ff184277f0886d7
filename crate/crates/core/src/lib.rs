//! Hypothesis-driven architecture discovery: memory, bandit selection,
//! agent contracts, novelty filtering, execution and run persistence.

pub mod agents;
pub mod executor;
pub mod ids;
pub mod memory;
pub mod orchestrator;
pub mod persistence;
pub mod redundancy;
pub mod reports;
pub mod rng;
pub mod selection;
pub mod sweep;
