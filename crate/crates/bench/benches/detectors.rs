use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use hsdetect_core::detect::{mf_image_with_stats, two_stage_with_stats};
use hsdetect_core::evaluate::{pr_curve, roc_curve, TruthMask, UncertainPolicy};
use hsdetect_core::preprocess::median_normalize;
use hsdetect_core::stats::GaussianStats;
use hsdetect_core::synth::{generate_scene, Scene, SceneSpec};

fn scene(bands: usize) -> Scene {
    let mut spec = SceneSpec::separable(128, 128, bands, 800, 7);
    spec.template_perturbation = 0.1;
    generate_scene(&spec).expect("valid spec")
}

fn bench_stats_estimation(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_stats");
    for bands in [16usize, 64, 113] {
        let scene = scene(bands);
        group.bench_with_input(BenchmarkId::from_parameter(bands), &scene, |b, scene| {
            b.iter(|| {
                GaussianStats::estimate_flat(
                    black_box(scene.cube.flat()),
                    black_box(scene.cube.bands()),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_mf_image(c: &mut Criterion) {
    let mut group = c.benchmark_group("mf_image");
    for bands in [16usize, 113] {
        let scene = scene(bands);
        let stats = GaussianStats::estimate_flat(scene.cube.flat(), scene.cube.bands()).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(bands),
            &(&scene, &stats),
            |b, (scene, stats)| {
                b.iter(|| {
                    mf_image_with_stats(
                        black_box(&scene.cube),
                        black_box(&scene.detector_template),
                        stats,
                    )
                    .unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_two_stage(c: &mut Criterion) {
    let scene = scene(32);
    let stats = GaussianStats::estimate_flat(scene.cube.flat(), scene.cube.bands()).unwrap();
    c.bench_function("two_stage_128x128x32", |b| {
        b.iter(|| {
            two_stage_with_stats(
                black_box(&scene.cube),
                black_box(&scene.detector_template),
                400,
                stats.clone(),
            )
            .unwrap()
        })
    });
}

fn bench_curves(c: &mut Criterion) {
    let scene = scene(16);
    let stats = GaussianStats::estimate_flat(scene.cube.flat(), scene.cube.bands()).unwrap();
    let scores = mf_image_with_stats(&scene.cube, &scene.detector_template, &stats).unwrap();
    let truth = TruthMask::from_annotation(&scene.mask, 1, UncertainPolicy::Exclude);
    c.bench_function("roc_curve_16k", |b| {
        b.iter(|| roc_curve(black_box(&scores), black_box(&truth)).unwrap())
    });
    c.bench_function("pr_curve_16k", |b| {
        b.iter(|| pr_curve(black_box(&scores), black_box(&truth)).unwrap())
    });
}

fn bench_preprocess(c: &mut Criterion) {
    let scene = scene(64);
    c.bench_function("median_normalize_128x128x64", |b| {
        b.iter(|| median_normalize(black_box(&scene.cube)))
    });
}

criterion_group!(
    benches,
    bench_stats_estimation,
    bench_mf_image,
    bench_two_stage,
    bench_curves,
    bench_preprocess
);
criterion_main!(benches);
