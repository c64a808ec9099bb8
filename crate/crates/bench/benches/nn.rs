use std::hint::black_box;

use alpe_core::nn::{DenseNet, DenseNetConfig, Mode};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(input_dim: usize) -> DenseNet {
    DenseNet::new(DenseNetConfig::new(input_dim), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

fn dense_net(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..12).map(|_| rng.random()).collect();

    let mut g = c.benchmark_group("dense_net_8x64");
    let n = net(12);
    g.bench_function("predict", |b| b.iter(|| n.predict(black_box(&x)).unwrap()));
    g.bench_function("gradient", |b| b.iter(|| n.gradient(black_box(&x), 0.5).unwrap()));
    let mut train = net(12);
    g.bench_function("train_step", |b| {
        b.iter(|| train.train_step(black_box(&x), 0.5).unwrap())
    });
    let mut fwd = net(12);
    g.bench_function("forward_train", |b| {
        b.iter(|| fwd.forward(black_box(&x), Mode::Train).unwrap())
    });
    g.finish();
}

criterion_group!(benches, dense_net);
criterion_main!(benches);
