use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use curriculum_bench::{random_rollouts, small_gridworld_experiment};
use curriculum_core::harness::{default_mapping, EnvironmentKind, ExperimentPlan};
use curriculum_core::{map_complexity, Complexity, GridWorld, GridWorldLayout, PredatorPrey};
use std::sync::Arc;

fn rollouts(c: &mut Criterion) {
    let mut grid = GridWorld::new(Arc::new(GridWorldLayout::default_maze()));
    c.bench_function("gridworld_100_random_episodes", |b| {
        b.iter(|| random_rollouts(&mut grid, black_box(100), 1))
    });

    let mapping = default_mapping(EnvironmentKind::PredatorPrey, None).unwrap();
    let mut pp = PredatorPrey::new(
        Default::default(),
        map_complexity(&mapping, Complexity::FINAL),
    );
    c.bench_function("predator_prey_100_random_episodes", |b| {
        b.iter(|| random_rollouts(&mut pp, black_box(100), 1))
    });
}

fn experiment(c: &mut Criterion) {
    let plan = ExperimentPlan::new(&small_gridworld_experiment(12_000)).unwrap();
    let mut group = c.benchmark_group("experiment");
    group.sample_size(20);
    group.bench_function("gridworld_friction_12k_steps_one_seed", |b| {
        b.iter(|| plan.run_seed(black_box(0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, rollouts, experiment);
criterion_main!(benches);
