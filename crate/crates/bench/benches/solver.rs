use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use layerrd::{
    ba_fixed_beta, bd_rate, check_theorem1, random_pipeline, solve_rd_curve, DistortionKind,
    DistortionMatrix, FiniteDistribution, PipelineSizes, RateQualityCurve, SolverConfig,
};

fn fixed_beta(c: &mut Criterion) {
    let p = random_pipeline(
        1,
        PipelineSizes::new(6, 6, 5, 3),
        DistortionKind::RandomNonnegative,
    )
    .unwrap();
    let src = p.y1_distribution();
    let d = p.distortion_on_y1();
    let cfg = SolverConfig::default();
    c.bench_function("ba_fixed_beta 6x3 beta=5", |b| {
        b.iter(|| ba_fixed_beta(black_box(&src), black_box(&d), 5.0, &cfg).unwrap())
    });
}

fn curves(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let src = FiniteDistribution::uniform(2).unwrap();
    let d = DistortionMatrix::hamming(2).unwrap();
    c.bench_function("solve_rd_curve binary", |b| {
        b.iter(|| solve_rd_curve(black_box(&src), black_box(&d), &cfg).unwrap())
    });

    let p = random_pipeline(2, PipelineSizes::new(6, 6, 5, 3), DistortionKind::Hamming).unwrap();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("check_theorem1 6,6,5,3", |b| {
        b.iter(|| check_theorem1(black_box(&p), 20, &cfg, 1e-4).unwrap())
    });
    group.finish();
}

fn bd(c: &mut Criterion) {
    let a = RateQualityCurve::new(
        vec![(0.1, 30.0), (0.2, 32.5), (0.4, 34.8), (0.8, 36.9)],
        "psnr_db",
        "ref",
    )
    .unwrap();
    let t = a.scale_rates(0.8).unwrap();
    c.bench_function("bd_rate 4 points", |b| {
        b.iter(|| bd_rate(black_box(&a), black_box(&t)).unwrap())
    });
}

criterion_group!(benches, fixed_beta, curves, bd);
criterion_main!(benches);
