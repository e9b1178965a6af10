use std::hint::black_box;

use bioledger_bench as fx;
use bioledger_core::biohash::BiohashConfig;
use bioledger_core::evaluation::{compute_eer, ScoreSet};
use bioledger_core::matcher::{dtw, hamming, newton_nth_root, FixedPointConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_hamming(c: &mut Criterion) {
    let mut g = c.benchmark_group("hamming");
    for len in [75, 501, 1500] {
        let (a, b) = (fx::bits(len, 1), fx::bits(len, 2));
        g.bench_with_input(BenchmarkId::from_parameter(len), &len, |bench, _| {
            bench.iter(|| hamming(black_box(&a), black_box(&b)).unwrap())
        });
    }
    g.finish();
}

fn bench_root(c: &mut Criterion) {
    let cfg = FixedPointConfig::default();
    c.bench_function("newton_sqrt_1e12", |b| {
        b.iter(|| newton_nth_root(black_box(999_999_999_999), 2, &cfg).unwrap())
    });
}

fn bench_dtw(c: &mut Criterion) {
    let mut g = c.benchmark_group("dtw");
    g.sample_size(20);
    for frames in [100, 300] {
        let (a, b) = (fx::series(frames, 21, 3), fx::series(frames, 21, 4));
        g.bench_with_input(BenchmarkId::from_parameter(frames), &frames, |bench, _| {
            bench.iter(|| dtw(black_box(&a), black_box(&b)).unwrap())
        });
    }
    g.finish();
}

fn bench_eer(c: &mut Criterion) {
    let (genuine, impostor) = fx::scores(10_000, 5);
    let s = ScoreSet::new(genuine, impostor);
    c.bench_function("compute_eer_10k", |b| {
        b.iter(|| compute_eer(black_box(&s)).unwrap())
    });
}

fn bench_hash(c: &mut Criterion) {
    let mut g = c.benchmark_group("biohash");
    let sample = fx::dataset(9).samples()[0].clone();
    for theta in [0, 2] {
        let model = fx::model(&BiohashConfig::with_theta(theta).unwrap(), 9);
        g.bench_with_input(BenchmarkId::new("theta", theta), &theta, |bench, _| {
            bench.iter(|| model.hash(black_box(&sample)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    kernels,
    bench_hamming,
    bench_root,
    bench_dtw,
    bench_eer,
    bench_hash
);
criterion_main!(kernels);
