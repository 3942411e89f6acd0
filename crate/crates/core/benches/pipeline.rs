//! Each stage is timed twice: inside a one-thread rayon pool (the
//! sequential baseline) and inside the default pool. Building with
//! `--no-default-features` removes rayon from the library entirely.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use endomosaic::pipeline::{frame_dims, run_pipeline, PipelineConfig};
use endomosaic::registration::register;
use endomosaic::synth::{generate_scene, generate_sweep, SceneSpec, SweepSpec};
use endomosaic::{
    composite, extract_features, globalize, image_focus_value, select_focused_frames, sharpen_grid, CompositeMode,
    FeatureConfig, FrameRecord, RegistrationConfig,
};
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let threads = default.current_num_threads();
    vec![
        (
            "sequential".to_string(),
            rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (format!("pool_{threads}"), default),
    ]
}

fn frames() -> Vec<FrameRecord> {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let sweep = SweepSpec {
        max_frames: Some(60),
        ..SweepSpec::default()
    };
    generate_sweep(&scene, &sweep).unwrap().frames
}

fn stages(c: &mut Criterion) {
    let frames = frames();
    let out = run_pipeline(&frames, &PipelineConfig::default()).unwrap();
    let selected: Vec<FrameRecord> = out.selection.iter().map(|s| frames[s.position].clone()).collect();
    let features = FeatureConfig::default();

    let mut group = c.benchmark_group("stages");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("focus_value", &name), |b| {
            b.iter(|| pool.install(|| image_focus_value(&frames[0].image, 64).unwrap()))
        });
        group.bench_function(BenchmarkId::new("select_60", &name), |b| {
            b.iter(|| pool.install(|| select_focused_frames(&frames, 5, 64).unwrap()))
        });
        group.bench_function(BenchmarkId::new("features", &name), |b| {
            b.iter(|| pool.install(|| extract_features(&frames[0].image, &features)))
        });
        group.bench_function(BenchmarkId::new("register", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let r = register(&selected, &RegistrationConfig::default()).unwrap();
                    globalize(&r, &frame_dims(&selected)).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("composite", &name), |b| {
            b.iter(|| pool.install(|| composite(&selected, &out.layout, CompositeMode::Overwrite).unwrap()))
        });
        group.bench_function(BenchmarkId::new("sharpen", &name), |b| {
            b.iter(|| pool.install(|| sharpen_grid(&selected, &out.layout, &out.provenance, 64).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
