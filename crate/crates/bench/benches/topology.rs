use consensus_lab::gain::theorem1_gain;
use consensus_lab::graph::WeightedDigraph;
use consensus_lab::topology::{adversarial_process, minimal_delta, random_a1prime_process, verify_a1};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn adversarial_trace(h: usize) -> Vec<WeightedDigraph> {
    let gains = theorem1_gain(4, 1.0, 1.0, 0.3).unwrap();
    adversarial_process(&gains, 0.3, 1.0, 4, h).unwrap().trace(h).unwrap()
}

fn a1_verification(c: &mut Criterion) {
    let trace = adversarial_trace(20_000);
    let mut group = c.benchmark_group("a1");
    group.sample_size(20);
    group.bench_function("verify_2e4", |b| b.iter(|| verify_a1(black_box(&trace), 0.3, 1.0).unwrap()));
    group.bench_function("minimal_delta_2e4", |b| b.iter(|| minimal_delta(black_box(&trace), 1.0).unwrap()));
    group.finish();
}

fn construction(c: &mut Criterion) {
    let gains = theorem1_gain(4, 1.0, 1.0, 0.3).unwrap();
    c.bench_function("adversarial_build_1e5", |b| {
        b.iter(|| adversarial_process(&gains, 0.3, 1.0, 4, 100_000).unwrap())
    });
    let process = random_a1prime_process(3, 0.3, 1.0, 8, 5).unwrap();
    c.bench_function("random_block_graph_at", |b| {
        let mut t = 1;
        b.iter(|| {
            t += 1;
            process.graph_at(black_box(t)).unwrap().edge_count()
        })
    });
}

criterion_group!(benches, a1_verification, construction);
criterion_main!(benches);
