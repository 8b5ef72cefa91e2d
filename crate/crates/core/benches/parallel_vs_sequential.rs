use colorseg::eval::{match_all, GroundTruth};
use colorseg::heuristics::mark_isolated_rank0_with;
use colorseg::pipeline::{prepare, PipelineConfig};
use colorseg::preprocess::{bilateral_filter_with, BilateralParams};
use colorseg::rag::{EdgeLock, Rag};
use colorseg::synth::{generate, SceneKind, SceneSpec};
use colorseg::{ColourVec, Execution, Rank};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn scene(size: usize, seed: u64) -> colorseg::synth::Scene {
    generate(&SceneSpec::new(SceneKind::MondrianRank0, size, size, 8, 3.0, seed)).unwrap()
}

fn bilateral(c: &mut Criterion) {
    let img = scene(192, 1).image.map(|&p| ColourVec::from_rgb8(p));
    let params = BilateralParams::new(50.0, 50.0, 8).unwrap();
    let mut g = c.benchmark_group("bilateral_192px_r8");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bilateral_filter_with(black_box(&img), &params, exec))
        });
    }
    g.finish();
}

fn rank0_stage(c: &mut Criterion) {
    let cfg = PipelineConfig {
        b: 1.0,
        radius: Some(2),
        ..PipelineConfig::default()
    };
    let (t, o) = prepare(&scene(128, 2).image, &cfg, Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("rank0_stage_128px");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut rag = Rag::from_pixels(&t, &o).unwrap();
                rag.run_stage_with(Rank::Point, 10.0 / 255.0, EdgeLock::None, exec).unwrap();
                rag.segment_count()
            })
        });
    }
    g.finish();
}

fn isolation(c: &mut Criterion) {
    let cfg = PipelineConfig {
        b: 1.0,
        radius: Some(2),
        ..PipelineConfig::default()
    };
    let (t, o) = prepare(&scene(128, 3).image, &cfg, Execution::Parallel).unwrap();
    let mut rag = Rag::from_pixels(&t, &o).unwrap();
    rag.run_stage(Rank::Point, 2.0 / 255.0, EdgeLock::None).unwrap();
    let mut g = c.benchmark_group("kl_isolation");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mark_isolated_rank0_with(black_box(&rag), 1.0, exec).unwrap())
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let items: Vec<_> = (0..16)
        .map(|seed| {
            let s = scene(128, 100 + seed);
            let out = s.labels.map(|&l| l / 2);
            (GroundTruth::without_shadows(s.labels), out)
        })
        .collect();
    let mut g = c.benchmark_group("eval_16_images");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| match_all(black_box(&items), exec)));
    }
    g.finish();
}

criterion_group!(benches, bilateral, rank0_stage, isolation, evaluation);
criterion_main!(benches);
