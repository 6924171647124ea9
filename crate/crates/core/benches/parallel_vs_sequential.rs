use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gma_core::cluster::{kmeans, KMeansParams, Point};
use gma_core::dataset;
use gma_core::graph::{betweenness_centrality, maximal_cliques, SimpleGraph};
use gma_core::space::{count_consistent_configurations_with, ConstraintSet};
use gma_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random_graph(n: usize, p: f64, seed: u64) -> SimpleGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    SimpleGraph::from_edges(n, edges).unwrap()
}

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Point> = (0..20_000).map(|_| [rng.random(), rng.random()]).collect();
    let params = KMeansParams::new(4, 42);
    let mut g = c.benchmark_group("kmeans-20k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| kmeans(black_box(&points), &params, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_counting(c: &mut Criterion) {
    let field = dataset::bundled_field();
    let mut cs = ConstraintSet::new();
    for (a, b) in [
        ("capability.agi", "transition.slow-takeoff"),
        ("race-dynamics.cooperation", "international-governance.weak"),
        ("timeline.under-20", "paradigm.new"),
        ("actor.coalition", "diffusion.centralized"),
    ] {
        cs.exclude(&field, a, b).unwrap();
    }
    let mut g = c.benchmark_group("constrained-count-bundled");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| count_consistent_configurations_with(&field, black_box(&cs), exec).unwrap())
        });
    }
    g.finish();
}

fn bench_cliques(c: &mut Criterion) {
    let graph = random_graph(120, 0.3, 7);
    let mut g = c.benchmark_group("cliques-120");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| maximal_cliques(black_box(&graph), exec)));
    }
    g.finish();
}

fn bench_betweenness(c: &mut Criterion) {
    let graph = random_graph(600, 0.02, 9);
    let mut g = c.benchmark_group("betweenness-600");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| betweenness_centrality(black_box(&graph), true, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_kmeans, bench_counting, bench_cliques, bench_betweenness);
criterion_main!(benches);
