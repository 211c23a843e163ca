use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psmtr_bench::planted;
use psmtr_core::contract_leading;
use psmtr_core::regression::als::als_sweep;
use psmtr_core::regression::{fit, init_factors, RegressionConfig};
use std::hint::black_box;

fn contraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("contract_leading");
    for &(d1, d2) in &[(16, 12), (32, 24)] {
        let (data, _) = planted(5, 1, (d1, d2));
        let x = data.input(0).unwrap();
        let w = init_factors(&[5, d1, d2, d1, d2], 10, 1).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{d1}x{d2}")),
            &x,
            |b, x| b.iter(|| contract_leading(black_box(x), &w, 3).unwrap()),
        );
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("als_sweep");
    group.sample_size(20);
    for &rank in &[2, 10] {
        let (data, _) = planted(5, 20, (32, 24));
        let w0 = init_factors(&[5, 32, 24, 32, 24], rank, 1).unwrap();
        group.bench_with_input(BenchmarkId::new("32x24", rank), &rank, |b, _| {
            b.iter_batched(
                || w0.clone(),
                |mut w| als_sweep(&mut w, &data, 1.0).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn full_fit(c: &mut Criterion) {
    let (data, _) = planted(5, 20, (16, 12));
    let cfg = RegressionConfig {
        rank: 4,
        lambda: 1.0,
        working_shape: (16, 12),
        max_sweeps: 10,
        rel_tol: 0.0,
        ..Default::default()
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("16x12_r4_10_sweeps", |b| {
        b.iter(|| fit(black_box(&data), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, contraction, sweep, full_fit);
criterion_main!(benches);
