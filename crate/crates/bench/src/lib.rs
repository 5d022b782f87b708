//! Shared fixtures for the benchmarks.

use curriculum_core::harness::{BudgetUnit, EnvironmentKind, ExperimentConfig};
use curriculum_core::{Action, CurriculumEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy upward performance trace of length `n`.
pub fn performance_trace(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|t| t as f64 / n as f64 + rng.random_range(-0.1..0.1))
        .collect()
}

/// Plays `episodes` uniformly random episodes on the final task and returns
/// the number of steps taken.
pub fn random_rollouts(env: &mut dyn CurriculumEnv, episodes: usize, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = 0;
    for _ in 0..episodes {
        env.reset_final(&mut rng).expect("final task resets");
        loop {
            steps += 1;
            let out = env
                .step(Action::from_index(rng.random_range(0..4)))
                .expect("episode in progress");
            if out.done {
                break;
            }
        }
    }
    steps
}

pub fn small_gridworld_experiment(steps: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(EnvironmentKind::Gridworld);
    cfg.workers = 4;
    cfg.budget.unit = BudgetUnit::Steps;
    cfg.budget.amount = steps;
    cfg.budget.eval_every = steps;
    cfg
}
