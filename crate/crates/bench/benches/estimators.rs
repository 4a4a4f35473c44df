use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gmips_bench::{config, dataset};
use gmips_core::estimators::{action_ratios, marginal_ratios_all, WeightCache};
use gmips_core::synth::generate_log;
use gmips_core::{parse_estimator, EstimatorSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 6] = ["snSIPS", "snIIPS", "snRIPS", "MSIPS", "MIIPS", "MRIPS"];

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate");
    for n in [1000, 8000] {
        let cfg = config(n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| generate_log(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap())
        });
    }
    group.finish();
}

fn ratios(c: &mut Criterion) {
    let ds = dataset(4000, 3);
    c.bench_function("action_ratios/4000", |b| {
        b.iter(|| action_ratios(black_box(&ds)).unwrap())
    });
    let mut group = c.benchmark_group("marginal_ratios_all");
    for dims in [3, 6, 12] {
        let ds = dataset(2000, dims);
        group.bench_with_input(BenchmarkId::from_parameter(dims), &ds, |b, ds| {
            b.iter(|| marginal_ratios_all(black_box(ds)).unwrap())
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let ds = dataset(4000, 3);
    let specs: Vec<EstimatorSpec> = LABELS
        .iter()
        .map(|l| parse_estimator(l, ds.positions(), 0.05).unwrap())
        .collect();
    c.bench_function("six_estimators_shared_cache/4000", |b| {
        b.iter(|| {
            let cache = WeightCache::new(&ds);
            specs
                .iter()
                .map(|s| cache.run(s).unwrap().report.value)
                .sum::<f64>()
        })
    });
    let slope = parse_estimator("MRIPS+slope", ds.positions(), 0.05).unwrap();
    let wide = dataset(2000, 12);
    c.bench_function("mrips_slope/2000x12", |b| {
        b.iter(|| WeightCache::new(&wide).run(&slope).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = generation, ratios, estimators
}
criterion_main!(benches);
