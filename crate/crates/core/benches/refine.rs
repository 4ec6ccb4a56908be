use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maskforge::exec::default_jobs;
use maskforge::mask::{erode, BinaryMask};
use maskforge::pipeline::{refine_instances, RefineConfig};
use maskforge::segmenter::{MockSegmenter, PromptedSegmenter, SceneGenerator};

fn refine(c: &mut Criterion) {
    let gen = SceneGenerator {
        width: 256,
        height: 256,
        max_shapes: 12,
        ..Default::default()
    };
    let scene = gen.generate(7);
    let mock = MockSegmenter::new(scene.clone(), 0.05, 7).unwrap();
    let emb = mock.embed(&scene.render()).unwrap();
    let coarse: Vec<BinaryMask> = scene.shapes.iter().map(|s| erode(&s.mask, 2)).collect();
    let cfg = RefineConfig::default();

    let mut group = c.benchmark_group("refine_instances");
    group.sample_size(10);
    let parallel = default_jobs().max(2);
    for (name, jobs) in [("sequential", 1), ("parallel", parallel)] {
        group.bench_with_input(BenchmarkId::new(name, jobs), &jobs, |b, &jobs| {
            b.iter(|| {
                refine_instances(&emb, black_box(&coarse), None, &cfg, &mock, None, jobs).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, refine);
criterion_main!(benches);
