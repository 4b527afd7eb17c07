use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hcmt_core::data::LabelMask;
use hcmt_core::metrics::{dice_jaccard, squared_distance_transform, surface_distances};
use ndarray::Array3;
use std::hint::black_box;

fn ball(side: usize, center: f64, radius: f64) -> LabelMask {
    let a = Array3::from_shape_fn((side, side, side), |(x, y, z)| {
        let d = [x, y, z].iter().map(|&v| (v as f64 - center).powi(2)).sum::<f64>();
        u8::from(d.sqrt() <= radius)
    });
    LabelMask::new(a).unwrap()
}

fn metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("metrics");
    for side in [32, 64, 96] {
        let s = side as f64;
        let pred = ball(side, s * 0.5, s * 0.3);
        let gt = ball(side, s * 0.52, s * 0.28);
        g.bench_with_input(BenchmarkId::new("dice_jaccard", side), &side, |b, _| {
            b.iter(|| dice_jaccard(black_box(&pred), black_box(&gt)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("surface_distances", side), &side, |b, _| {
            b.iter(|| surface_distances(black_box(&pred), black_box(&gt), [1.0, 1.0, 1.0]).unwrap())
        });
        let features = pred.data().mapv(|v| v == 1);
        g.bench_with_input(BenchmarkId::new("edt", side), &side, |b, _| {
            b.iter(|| squared_distance_transform(black_box(&features), [1.0, 0.8, 2.5]))
        });
    }
    g.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
