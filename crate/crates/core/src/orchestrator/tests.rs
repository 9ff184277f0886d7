use std::collections::BTreeSet;

use super::*;
use crate::agents::AgentRole;
use crate::executor::SyntheticLandscape;
use crate::memory::RunStatus;

fn config(seed: u64) -> DiscoveryConfig {
    DiscoveryConfig {
        seed,
        iterations: 6,
        n_roots: 3,
        ..DiscoveryConfig::default()
    }
}

fn start(config: DiscoveryConfig) -> (Discovery, IterationReport, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let components = build_components(&config).unwrap();
    let (d, report) = Discovery::init_run(config, components, dir.path().to_path_buf()).unwrap();
    (d, report, dir)
}

fn landscape(effects: &[f64], roots: &[f64]) -> SyntheticLandscape {
    let mut l = SyntheticLandscape::flat(0.0);
    l.hypothesis_effects = effects.iter().enumerate().map(|(i, e)| (HypId(i as u32), *e)).collect();
    l.root_fitnesses = roots.iter().enumerate().map(|(i, f)| (NodeId(i as u32), *f)).collect();
    l
}

#[test]
fn roots_are_built_and_admit_their_drafts() {
    let (d, report, _dir) = start(config(1));
    assert_eq!(report.new_nodes, vec![NodeId(0), NodeId(1), NodeId(2)]);
    assert_eq!(d.state.tree.len(), 3);
    for node in d.state.tree.iter() {
        assert!(node.is_root());
        assert!(node.tested_hypotheses.is_empty());
        assert_eq!(node.status(), Some(RunStatus::Success));
        assert!(d.state.concept_index.contains(node.node_id));
    }
    // two drafts per root, attributed to the root that proposed them
    for h in 0..6u32 {
        let hyp = d.state.bank.get(HypId(h)).unwrap();
        assert_eq!(hyp.source_node, Some(NodeId(h / 2)));
    }
    assert!(audit(&d.state).is_empty());
}

#[test]
fn steps_grow_children_and_keep_the_state_consistent() {
    let (mut d, _, _dir) = start(config(2));
    let summary = d.run().unwrap();
    assert_eq!(summary.reports.len(), 6);
    assert_eq!(d.state.iteration, 6);
    for report in &summary.reports {
        let parent = report.parent.unwrap();
        let sel = report.selection.as_ref().unwrap();
        assert!(!sel.selected.is_empty());
        assert_eq!(report.cycles.len(), sel.selected.len());
        for node in &report.new_nodes {
            assert_eq!(d.state.tree.get(*node).unwrap().parent, Some(parent));
            assert_eq!(d.state.tree.get(*node).unwrap().created_iteration, report.iteration);
        }
    }
    assert!(d.state.tree.len() > 3);
    let problems = audit(&d.state);
    assert!(problems.is_empty(), "{problems:?}");
}

#[test]
fn children_move_confidence_and_record_evidence() {
    let (mut d, _, _dir) = start(config(3));
    let report = d.step().unwrap();
    let child = report.new_nodes[0];
    let node = d.state.tree.get(child).unwrap();
    assert_eq!(node.feedback.len(), 3);
    let roles: Vec<_> = node.feedback.iter().map(|f| f.agent.as_str()).collect();
    assert_eq!(roles, ["feedback_quant", "feedback_qual", "feedback_causal"]);
    for h in &node.tested_hypotheses {
        let hyp = d.state.bank.get(*h).unwrap();
        let entry = hyp.evidence_log.iter().find(|e| e.node_id == child).unwrap();
        assert!(entry.from_experiment);
        assert_eq!(entry.agent, "synthesis");
        assert!(node.tested_confidence.contains_key(h));
    }
    assert!(!report.confidence_deltas.is_empty());
    assert_eq!(report.pairs.len(), report.new_nodes.iter().map(|n| d.state.tree.get(*n).unwrap().tested_hypotheses.len()).sum::<usize>());
}

#[test]
fn duplicates_are_regenerated_within_budget() {
    let mut cfg = config(4);
    cfg.mock.duplicate_rate = 0.0;
    cfg.mock.forced_duplicates = 2;
    let (mut d, _, _dir) = start(cfg);
    let report = d.step().unwrap();
    for cycle in &report.cycles {
        assert_eq!(cycle.duplicate_rejections, 2);
        assert!(matches!(cycle.result, CycleResult::Child { .. }));
    }
}

#[test]
fn exhausted_regeneration_budget_skips_the_cycle() {
    let mut cfg = config(5);
    cfg.mock.forced_duplicates = 3;
    let (mut d, _, _dir) = start(cfg);
    let before = d.state.tree.len();
    let report = d.step().unwrap();
    assert!(report.new_nodes.is_empty());
    for cycle in &report.cycles {
        assert_eq!(cycle.result, CycleResult::Skipped);
        assert_eq!(cycle.duplicate_rejections, 3);
    }
    assert_eq!(d.state.tree.len(), before);
    // the skipped hypotheses are not offered again on that parent
    let parent = d.state.tree.get(report.parent.unwrap()).unwrap();
    for h in &report.selection.unwrap().selected {
        assert!(parent.tried_hypotheses.contains(h));
    }
}

#[test]
fn unavailable_judge_accepts_with_a_flag() {
    let mut cfg = config(6);
    cfg.mock.unavailable.insert(AgentRole::Judge);
    let (mut d, _, _dir) = start(cfg);
    let report = d.step().unwrap();
    assert!(!report.new_nodes.is_empty());
    let node = d.state.tree.get(report.new_nodes[0]).unwrap();
    assert!(node.flags.iter().any(|f| f.contains("novelty unchecked")));
}

#[test]
fn unavailable_idea_agent_rejects_cycles() {
    let mut cfg = config(7);
    cfg.mock.unavailable.insert(AgentRole::IdeaEvolve);
    let (mut d, _, _dir) = start(cfg);
    let report = d.step().unwrap();
    assert!(report.new_nodes.is_empty());
    assert!(report.cycles.iter().all(|c| matches!(c.result, CycleResult::Rejected { .. })));
}

#[test]
fn coder_repairs_crashes_then_gives_up_after_the_budget() {
    let mut cfg = config(8);
    cfg.mock.coder_failures = 2;
    let (d, _, _dir) = start(cfg.clone());
    let root = d.state.tree.get(NodeId(0)).unwrap();
    assert_eq!(root.status(), Some(RunStatus::Success));
    assert!(root.code_attempts.len() >= 3);
    assert!(root.code_attempts[0].error_text.as_deref().unwrap().starts_with("crash"));

    cfg.mock.coder_failures = 50;
    cfg.r_max = 3;
    let (d, _, _dir) = start(cfg);
    let root = d.state.tree.get(NodeId(0)).unwrap();
    assert_eq!(root.status(), Some(RunStatus::Failed));
    assert_eq!(root.code_attempts.len(), 4);
    assert_eq!(root.feedback.len(), 1);
    assert_eq!(root.feedback[0].agent, "feedback_diag");
}

#[test]
fn timeouts_are_diagnosed_and_contradict() {
    let mut cfg = config(9);
    let mut l = landscape(&[0.02; 20], &[0.6, 0.6, 0.6]);
    // hypothesis 0 makes training ten times slower than the budget
    l.hypothesis_costs.insert(HypId(0), 20_000.0);
    cfg.sim.landscape = Some(l);
    cfg.n_roots = 3;
    let (mut d, _, _dir) = start(cfg);
    let mut seen = false;
    for _ in 0..6 {
        let report = d.step().unwrap();
        for n in &report.new_nodes {
            let node = d.state.tree.get(*n).unwrap();
            if node.tested_hypotheses.contains(&HypId(0)) {
                assert_eq!(node.status(), Some(RunStatus::Timeout));
                assert_eq!(node.feedback[0].agent, "feedback_diag");
                let e = d.state.bank.get(HypId(0)).unwrap().evidence_log.iter().find(|e| e.node_id == *n).unwrap();
                assert_eq!(e.evidence_type, crate::memory::EvidenceType::Contradicts);
                seen = true;
            }
        }
    }
    assert!(seen, "hypothesis 0 was never tested");
}

#[test]
fn refinement_keeps_the_best_run() {
    let mut cfg = config(10);
    cfg.sim.noise_sd = 0.05;
    let (d, _, _dir) = start(cfg);
    for node in d.state.tree.iter() {
        let out = node.outcome.as_ref().unwrap();
        assert!(node.code_attempts.len() <= 1 + 5);
        assert!(out.best_accuracy > 0.0);
    }
}

#[test]
fn saturated_parents_are_marked_exhausted() {
    // one root, two hypotheses: after both are tried the root has nothing left
    let mut cfg = config(11);
    cfg.n_roots = 1;
    cfg.mock.pool_size = 2;
    cfg.mock.draft_rate = 0.0;
    cfg.weights.k_hypo = 1;
    cfg.sim.landscape = Some(landscape(&[-0.05, -0.05], &[0.6]));
    let (mut d, _, _dir) = start(cfg);
    let summary = d.run().unwrap();
    assert!(summary.exhausted);
    assert!(summary.reports.len() < 6);
    assert!(d.state.tree.get(NodeId(0)).unwrap().exhausted || summary.reports.iter().any(|r| !r.exhausted.is_empty()));
    assert!(audit(&d.state).is_empty());
}

#[test]
fn same_seed_gives_identical_runs() {
    let run = |seed| {
        let (mut d, _, _dir) = start(config(seed));
        let summary = d.run().unwrap();
        (serde_json::to_string(&d.state).unwrap(), serde_json::to_string(&summary.reports).unwrap())
    };
    assert_eq!(run(12), run(12));
    assert_ne!(run(12).0, run(13).0);
}

#[test]
fn every_strategy_runs() {
    for strategy in Strategy::ALL {
        let mut cfg = config(14);
        cfg.strategy = strategy;
        let (mut d, _, _dir) = start(cfg);
        d.run().unwrap();
        assert!(audit(&d.state).is_empty(), "{strategy}");
        let ids: BTreeSet<_> = d.state.tree.iter().map(|n| n.node_id).collect();
        assert_eq!(ids.len(), d.state.tree.len());
    }
}

#[test]
fn budget_is_enforced() {
    let (mut d, _, _dir) = start(config(15));
    d.run().unwrap();
    assert!(matches!(d.step(), Err(OrchestratorError::BudgetSpent(6))));
}
