//! Sequential versus rayon execution of the two data-parallel workloads:
//! experiment instances and exhaustive grid search.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fdcop::bench::{
    default_algorithms, run_experiment_with, ExperimentSpec, GeneratorConfig, Topology,
};
use fdcop::exec::Execution;
use fdcop::oracle::{grid_search_with, GridSpec};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    for topology in [Topology::SparseEr, Topology::ScaleFree] {
        let spec = ExperimentSpec {
            instances: 8,
            base_seed: 1,
            ..ExperimentSpec::new(GeneratorConfig::preset(topology, 30), default_algorithms(3))
        };
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, topology), &spec, |b, spec| {
                b.iter(|| black_box(run_experiment_with(spec, mode).unwrap()))
            });
        }
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_search");
    group.sample_size(10);
    let p = GeneratorConfig::preset(Topology::Tree, 4)
        .generate(7)
        .unwrap();
    for points in [11, 31] {
        let spec = GridSpec::new(points);
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, points), &spec, |b, spec| {
                b.iter(|| black_box(grid_search_with(&p, spec, mode).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, experiment, grid);
criterion_main!(benches);
