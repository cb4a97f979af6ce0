//! Throughput benchmarks for the samplers and the coefficient transform.

use capstream_core::continuous::sample_fixed_k_continuous;
use capstream_core::discrete::{sample_fixed_k_discrete, sample_fixed_tau_discrete};
use capstream_core::discrete_est::DiscreteCoefficients;
use capstream_core::harness::generate_zipf_stream;
use capstream_core::{Element, Ell, KeyHasher, RandomSource};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

const STREAM_LEN: usize = 20_000;

fn stream() -> Vec<Element> {
    generate_zipf_stream(1.2, STREAM_LEN, &RandomSource::new(7)).unwrap()
}

fn bench_samplers(c: &mut Criterion) {
    let elements = stream();
    let hasher = KeyHasher::new(1);
    let source = RandomSource::new(2);

    let mut group = c.benchmark_group("samplers");
    group.throughput(Throughput::Elements(STREAM_LEN as u64));
    group.bench_function("discrete_fixed_tau_ell10", |b| {
        b.iter(|| {
            sample_fixed_tau_discrete(
                elements.iter().copied(),
                Ell::Finite(10),
                0.01,
                hasher,
                &source,
            )
            .unwrap()
        })
    });
    group.bench_function("discrete_fixed_k_ell10", |b| {
        b.iter(|| {
            sample_fixed_k_discrete(
                elements.iter().copied(),
                Ell::Finite(10),
                100,
                hasher,
                &source,
            )
            .unwrap()
        })
    });
    group.bench_function("continuous_fixed_k_ell10", |b| {
        b.iter(|| {
            sample_fixed_k_continuous(elements.iter().copied(), 10.0, 100, hasher, &source).unwrap()
        })
    });
    group.finish();
}

fn bench_zipf(c: &mut Criterion) {
    let mut group = c.benchmark_group("zipf");
    group.throughput(Throughput::Elements(STREAM_LEN as u64));
    group.bench_function("generate_alpha_1_2", |b| {
        let mut seed = 0u64;
        b.iter_batched(
            || {
                seed += 1;
                RandomSource::new(seed)
            },
            |src| generate_zipf_stream(1.2, STREAM_LEN, &src).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("coefficients");
    for (ell, tau) in [(20u64, 0.01), (1000, 0.002)] {
        group.bench_function(format!("transform_ell{ell}_tau{tau}"), |b| {
            b.iter(|| {
                let coef =
                    DiscreteCoefficients::new(Ell::Finite(ell), black_box(tau), 20_000).unwrap();
                black_box(coef.inverse_identity_residual())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_samplers, bench_zipf, bench_coefficients);
criterion_main!(benches);
