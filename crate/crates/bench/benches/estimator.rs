//! Hot-path benchmarks: likelihood score routes, the denoiser forward
//! pass, and the full reverse-chain estimate.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dmce_bench::fixture;
use dmce_core::channel::sample_rng;
use dmce_core::diffusion::vec_to_image;
use dmce_core::estimator::{estimate, likelihood_score_direct, likelihood_score_svd, EstimatorConfig};

fn bench_likelihood_paths(c: &mut Criterion) {
    // 32x8 with full pilots: M = N = 512
    let fx = fixture(32, 8, 100);
    let h = fx.truth.clone();
    let y = &fx.observation.y;
    let gram = fx.model.gram().clone();

    let mut group = c.benchmark_group("likelihood_m512");
    group.bench_function("svd_path", |b| {
        b.iter(|| {
            black_box(likelihood_score_svd(
                y,
                &fx.model.svd,
                black_box(&h),
                50,
                fx.model.noise_var,
                &fx.schedule,
            ))
        })
    });
    group.sample_size(10);
    group.bench_function("direct_path", |b| {
        b.iter(|| {
            black_box(
                likelihood_score_direct(
                    y,
                    &fx.model.a,
                    &gram,
                    black_box(&h),
                    50,
                    fx.model.noise_var,
                    &fx.schedule,
                )
                .unwrap(),
            )
        })
    });
    group.finish();
}

fn bench_denoiser_forward(c: &mut Criterion) {
    let fx = fixture(64, 16, 100);
    let image = vec_to_image::<f32>(&fx.truth, 16, 64);
    c.bench_function("denoiser_forward_16x64", |b| {
        b.iter(|| black_box(fx.net.forward(black_box(&image), &[50]).unwrap()))
    });
}

fn bench_full_estimate(c: &mut Criterion) {
    let fx = fixture(16, 4, 100);
    let cfg = EstimatorConfig::default();
    let mut group = c.benchmark_group("estimate_desk_16x4");
    group.sample_size(10);
    group.bench_function("t100", |b| {
        b.iter(|| {
            let mut rng = sample_rng(9, 0);
            black_box(
                estimate(
                    &fx.observation,
                    &fx.model,
                    &fx.net,
                    &fx.schedule,
                    &cfg,
                    &mut rng,
                )
                .unwrap(),
            )
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_likelihood_paths,
    bench_denoiser_forward,
    bench_full_estimate
);
criterion_main!(benches);
