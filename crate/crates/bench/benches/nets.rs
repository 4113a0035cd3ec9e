use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use porogan::nets::{GeneratorConfig, Pass};
use porogan::tensor::no_grad;
use porogan::training::{train_step, TrainState};
use porogan::{Generator, TrainConfig, Variable, Variant};
use porogan_bench::batch;

fn bench_inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("generator");
    group.sample_size(10).measurement_time(Duration::from_secs(15));
    for variant in [Variant::Nli, Variant::Ili] {
        let g = Generator::new(&GeneratorConfig::new(variant, 1), 0).unwrap();
        let q = batch(1, 1);
        group.bench_function(format!("{variant} single query"), |b| {
            b.iter(|| no_grad(|| g.forward(black_box(&q.k), &q.t, &mut Pass::eval())).unwrap())
        });
    }
    group.finish();
}

fn bench_train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train step");
    group.sample_size(10).measurement_time(Duration::from_secs(60));
    for b in [2, 4] {
        let cfg = TrainConfig { batch_size: b, ..TrainConfig::default() };
        let mut state = TrainState::new(Variant::Nli, Variable::Pressure, &cfg, 1000).unwrap();
        let data = batch(b, 1);
        group.bench_function(format!("nli pressure, batch {b}"), |bench| bench.iter(|| train_step(&mut state, black_box(&data), 1).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_inference, bench_train_step);
criterion_main!(benches);
