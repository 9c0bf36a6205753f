use std::collections::BTreeSet;

use pursuit_core::arena::{ScenarioConfig, SimContext};
use pursuit_core::qnet::NetworkConfig;
use pursuit_core::replay::PerConfig;
use pursuit_core::trainer::*;

fn net() -> NetworkConfig {
    NetworkConfig {
        hidden: vec![16],
        ..NetworkConfig::default()
    }
}

fn small(workers: usize, deterministic: bool) -> TrainerConfig {
    TrainerConfig {
        batch_size: 16,
        warmup_min: 64,
        workers,
        snapshot_period: 25,
        target_sync_period: 50,
        episode_time_limit_s: Some(8.0),
        deterministic,
        ..TrainerConfig::default()
    }
}

fn run(plan: &str, steps: u64, cfg: &TrainerConfig, seed: u64) -> TrainReport {
    let plan = plan_by_name(plan, &ScenarioConfig::default(), Some(steps)).unwrap();
    train(&SimContext::default(), &net(), cfg, &PerConfig::default(), &plan, Policies::default(), seed, None).unwrap()
}

#[test]
fn threaded_run_collects_the_full_budget() {
    let cfg = small(4, false);
    let r = run("pursuit-circling", 400, &cfg, 3);
    assert_eq!(r.global_step, 1600);
    assert_eq!(r.inserted_per_worker, vec![400; 4]);
    let warm = cfg.warmup() as u64;
    // one learner step per `collect_per_train` transitions after warm-up
    let ceiling = (r.global_step - warm) / cfg.collect_per_train + 1;
    assert!(r.train_steps <= ceiling, "{} > {ceiling}", r.train_steps);
    assert!(r.train_steps >= ceiling / 2, "{} learner steps", r.train_steps);
    assert!(r.policies.pursuit.as_ref().unwrap().is_finite());
}

#[test]
fn deterministic_runs_are_identical() {
    let cfg = small(3, true);
    let a = run("bait-straight", 250, &cfg, 11);
    let b = run("bait-straight", 250, &cfg, 11);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.policies, b.policies);
    assert_eq!(a.train_steps, b.train_steps);
    let c = run("bait-straight", 250, &cfg, 12);
    assert_ne!(a.policies, c.policies);
}

#[test]
fn no_learning_before_warmup() {
    let cfg = TrainerConfig {
        warmup_min: 10_000,
        ..small(2, true)
    };
    let r = run("pursuit-straight", 300, &cfg, 5);
    assert_eq!(r.train_steps, 0);
    assert!(r.rows.iter().all(|row| row.mean_loss.is_none()));
}

#[test]
fn every_worker_explores_at_its_ladder_rung() {
    let cfg = TrainerConfig {
        episode_time_limit_s: Some(3.0),
        ..small(4, true)
    };
    let r = run("pursuit-random", 200, &cfg, 9);
    let seen: BTreeSet<u64> = r.rows.iter().map(|row| row.epsilon.to_bits()).collect();
    let ladder: BTreeSet<u64> = (0..4).map(|w| cfg.epsilon(w).to_bits()).collect();
    assert_eq!(seen, ladder);
}

#[test]
fn both_wingmen_feed_the_shared_learner() {
    let cfg = small(2, true);
    let r = run("coop-2v1", 150, &cfg, 2);
    // two phases of 150 steps per worker
    assert_eq!(r.global_step, 600);
    for n in &r.inserted_per_worker {
        assert!(*n > 300 && *n <= 600, "{n}");
    }
}

#[test]
fn single_worker_uniform_replay_is_the_baseline() {
    let cfg = TrainerConfig {
        epsilon_ladder: vec![0.1],
        ..small(1, true)
    };
    let per = PerConfig {
        alpha: 0.0,
        ..PerConfig::default()
    };
    assert_eq!(algorithm_label(&cfg, &per), "ddqn-uniform");
    let r = run("pursuit-straight", 200, &cfg, 1);
    assert_eq!(r.inserted_per_worker, vec![200]);
    assert!(r.rows.iter().all(|row| row.epsilon == 0.1));
}
