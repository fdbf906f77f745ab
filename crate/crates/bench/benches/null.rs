use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sbergsma_core::builtin::kerala_adjacency;
use sbergsma_core::null::{asymptotic_null_sample, monte_carlo_null, nystrom_spectrum, EigenSpectrum};
use sbergsma_core::ReferenceDistribution;

fn nystrom(c: &mut Criterion) {
    let mut group = c.benchmark_group("nystrom_spectrum");
    group.sample_size(10);
    for m in [250, 500, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| nystrom_spectrum(&ReferenceDistribution::standard_normal(), black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn null_sampling(c: &mut Criterion) {
    let w = kerala_adjacency().row_standardize().unwrap();
    let dist = ReferenceDistribution::standard_normal();
    let mut group = c.benchmark_group("null_100_draws");
    group.sample_size(10);
    group.bench_function("monte_carlo/T50", |b| {
        b.iter(|| monte_carlo_null(&dist, 14, 50, &w, 100, black_box(1)).unwrap())
    });
    let spectrum = EigenSpectrum::explicit(nystrom_spectrum(&dist, 500).unwrap()[..100].to_vec()).unwrap();
    let spectra = vec![spectrum; 14];
    group.bench_function("asymptotic/K100", |b| {
        b.iter(|| asymptotic_null_sample(&spectra, &w, 100, black_box(1)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, nystrom, null_sampling);
criterion_main!(benches);
