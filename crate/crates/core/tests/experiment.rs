use servnet_core::autonomic::{run_experiment, ExperimentConfig, REFERENCE_CLAIM};
use servnet_core::par::Execution;

#[test]
fn headline_configuration_meets_floor() {
    let r = run_experiment(&ExperimentConfig::new(100, 500, 1), Execution::Parallel)
        .unwrap()
        .report;
    assert!(r.reduction >= 0.5, "{}", r.summary());
    assert!(r.quality_loss <= 0.10, "{}", r.summary());
    assert_eq!(r.reference_claim, REFERENCE_CLAIM);
    assert!(r.summary().contains(REFERENCE_CLAIM));
}

#[test]
fn deterministic_per_seed_and_mode() {
    for seed in [1, 4, 9] {
        let cfg = ExperimentConfig::new(60, 300, seed);
        let a = run_experiment(&cfg, Execution::Sequential).unwrap();
        let b = run_experiment(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.links, b.links);
    }
}

#[test]
fn other_seeds_stay_useful() {
    for seed in 2..6 {
        let r = run_experiment(&ExperimentConfig::new(100, 500, seed), Execution::Parallel)
            .unwrap()
            .report;
        assert!(r.reduction > 0.5 && r.quality_loss < 0.10, "seed {seed}: {}", r.summary());
    }
}

#[test]
fn links_never_exceed_budgeted_visits() {
    let mut cfg = ExperimentConfig::new(50, 200, 3);
    cfg.budget = Some(10);
    let r = run_experiment(&cfg, Execution::Sequential).unwrap().report;
    assert!(r.nodes_visited_linked <= 10 * cfg.heldout_queries);
}
