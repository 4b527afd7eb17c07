use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hcmt_core::losses::{supervised_with_grad, ScaleWeights};
use hcmt_core::{FeatureMap, Network, NetworkSpec};
use std::hint::black_box;

fn input(side: usize) -> (FeatureMap<f32>, Vec<u8>) {
    let n = side * side * side;
    let x: Vec<f32> = (0..n).map(|i| ((i * 7919) % 113) as f32 / 56.0 - 1.0).collect();
    let y = x.iter().map(|&v| u8::from(v > 0.3)).collect();
    (FeatureMap::from_vec([side; 3], 1, x), y)
}

fn spec(base: usize) -> NetworkSpec {
    NetworkSpec {
        base_channels: base,
        encoder_depths: vec![1, 2, 2, 2, 2],
        ..NetworkSpec::default()
    }
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    for (base, side) in [(4, 32), (8, 32), (8, 48)] {
        let net = Network::<f32>::build(&spec(base), 1).unwrap();
        let (x, _) = input(side);
        g.bench_with_input(BenchmarkId::new(format!("base{base}"), side), &x, |b, x| {
            b.iter(|| net.predict(black_box(x)).unwrap())
        });
    }
    g.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_backward");
    g.sample_size(10);
    let weights = ScaleWeights::new(vec![0.5, 0.4, 0.05, 0.05]).unwrap();
    for (base, side) in [(4, 32), (8, 32)] {
        let net = Network::<f32>::build(&spec(base), 1).unwrap();
        let (x, y) = input(side);
        g.bench_function(BenchmarkId::new(format!("base{base}"), side), |b| {
            b.iter(|| {
                let pass = net.forward(&x).unwrap();
                let (_, d) = supervised_with_grad(&pass.pyramid, &y, &weights).unwrap();
                let mut grads = net.params().zeros_like();
                net.backward(&pass.tape, &d, &mut grads).unwrap();
                grads
            })
        });
    }
    g.finish();
}

criterion_group!(benches, forward, forward_backward);
criterion_main!(benches);
