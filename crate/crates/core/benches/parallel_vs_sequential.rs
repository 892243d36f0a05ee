use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mftree::exec::Execution;
use mftree::harness::{self, Algorithm, ExperimentConfig, FunctionSpec};
use mftree::mfpoo::{self, MfpooConfig};
use mftree::objective::{self, MultiFidelityObjective};
use mftree::theory;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn experiment_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment_grid");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    for (label, exec) in MODES {
        let mut cfg = ExperimentConfig::new(
            FunctionSpec::Synthetic("hartmann3".into()),
            Algorithm::Mfpoo,
            vec![20.0, 40.0],
            (0..16).collect(),
        );
        cfg.wall_time = false;
        cfg.parallel = exec == Execution::Parallel;
        group.bench_function(BenchmarkId::new("hartmann3_mfpoo", label), |b| {
            b.iter(|| harness::run_grid(&cfg).unwrap())
        });
    }
    group.finish();
}

fn mfpoo_instances(c: &mut Criterion) {
    let mut group = c.benchmark_group("mfpoo_instances");
    group.sample_size(10);
    let obj = objective::hartmann6();
    for (label, exec) in MODES {
        let mut cfg = MfpooConfig::new(200.0, obj.sigma()).with_seed(1);
        cfg.parallel = exec == Execution::Parallel;
        group.bench_function(BenchmarkId::new("hartmann6_budget200", label), |b| {
            b.iter(|| mfpoo::run(&cfg, &obj).unwrap())
        });
    }
    group.finish();
}

fn cell_count(c: &mut Criterion) {
    let mut group = c.benchmark_group("near_optimal_cell_count");
    group.sample_size(10);
    let obj = objective::hartmann3();
    for (label, exec) in MODES {
        group.bench_function(BenchmarkId::new("hartmann3_h9_res6", label), |b| {
            b.iter(|| theory::near_optimal_cell_count(&obj, 9, 0.5, 6, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, experiment_grid, mfpoo_instances, cell_count);
criterion_main!(benches);
