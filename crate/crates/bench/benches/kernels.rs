use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sigstop_core::policy::{loss_and_gradient, DeepPolicy, LinearPolicy, Policy};
use sigstop_core::process::{sample_fbm, GridSpec};
use sigstop_core::shuffle::{shuffle, shuffle_exp};
use sigstop_core::signature::{chen_step, dims, log_signature_coords, stream_signatures};
use sigstop_core::{DualPoly, LyndonBasis, ZDistribution};

fn signatures(c: &mut Criterion) {
    let mut g = c.benchmark_group("signature");
    for level in [2, 4, 6] {
        let n = sigstop_core::free_tensor::tensor_dim(2, level);
        let v = [0.01, -0.3];
        g.bench_function(format!("chen_step/N{level}"), |b| {
            let mut s = vec![0.0; n];
            s[0] = 1.0;
            let mut scratch = Vec::new();
            b.iter(|| chen_step(2, level, black_box(&mut s), black_box(&v), &mut scratch))
        });
    }
    let batch = sample_fbm(0.3, GridSpec::uniform(1.0, 100).unwrap(), 1, 1).unwrap();
    let times = batch.grid.fine_times();
    for level in [2, 3, 4] {
        g.bench_function(format!("stream/J100/N{level}"), |b| {
            b.iter(|| stream_signatures(&times, batch.path(0), 1, level).unwrap())
        });
        let stream = stream_signatures(&times, batch.path(0), 1, level).unwrap();
        let basis = LyndonBasis::new(2, level);
        g.bench_function(format!("logsig/J100/N{level}"), |b| b.iter(|| log_signature_coords(&stream, &basis).unwrap()));
    }
    g.finish();
}

fn shuffles(c: &mut Criterion) {
    let mut g = c.benchmark_group("shuffle");
    let l = DualPoly::parse(2, "0.3*∅ + 1 - 0.5*2 + 0.2*12 + 0.1*21").unwrap();
    g.bench_function("product/deg2", |b| b.iter(|| shuffle(black_box(&l), black_box(&l)).unwrap()));
    for level in [4, 6] {
        g.bench_function(format!("exp/N{level}"), |b| b.iter(|| shuffle_exp(black_box(&l), level)));
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample");
    g.sample_size(20);
    let grid = GridSpec::uniform(1.0, 100).unwrap();
    g.bench_function("fbm/J100/M1024", |b| b.iter(|| sample_fbm(0.1, grid, 1024, 7).unwrap()));
    g.finish();
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_and_gradient");
    g.sample_size(10);
    let m = 1024;
    let batch = sample_fbm(0.1, GridSpec::uniform(1.0, 100).unwrap(), m, 3).unwrap();
    let (sigma, eta) = dims(2, 2);
    let deep = Policy::Deep(DeepPolicy::new(2, 2, eta, &[eta + 30, eta + 30], 1).unwrap());
    let mut linear = LinearPolicy::zero(2, 2);
    linear.weights = (0..=sigma).map(|i| 0.01 * (i as f64 - 3.0)).collect();
    for policy in [deep, Policy::Linear(linear)] {
        let x = policy.features(&batch, 0..m).unwrap();
        g.bench_function(format!("{}/J100/M{m}", policy.kind()), |b| {
            b.iter(|| loss_and_gradient(&policy, x.data.view(), batch.y.view(), ZDistribution::Exp1).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, signatures, shuffles, sampling, training);
criterion_main!(benches);
