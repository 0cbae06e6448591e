use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orsim_bench::{equal_cost_set, field};
use orsim_core::{analysis, oracle};
use std::hint::black_box;

fn bench_closed_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("forwarder_set");
    for n in [2u32, 4, 8, 16] {
        let fs = equal_cost_set(n, 0.5, 1.0);
        group.bench_with_input(BenchmarkId::new("total_path_cost", n), &fs, |b, fs| {
            b.iter(|| analysis::total_path_cost(black_box(fs)))
        });
        group.bench_with_input(BenchmarkId::new("exact_single_hop", n), &fs, |b, fs| {
            b.iter(|| oracle::exact_single_hop(black_box(fs)))
        });
    }
    group.finish();
}

fn bench_network_costs(c: &mut Criterion) {
    let t = field(100);
    c.bench_function("network_path_costs/100", |b| {
        b.iter(|| analysis::network_path_costs_lenient(black_box(&t)))
    });
}

criterion_group!(benches, bench_closed_forms, bench_network_costs);
criterion_main!(benches);
