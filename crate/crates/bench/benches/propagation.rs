use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fringelab::{
    contrast, propagate, transfer_coefficients, LabeledFockState, NetworkParams, SourceParams, SpatialMode,
};
use fringelab_bench::{fitted_ket22, full_grid};

fn single_state(c: &mut Criterion) {
    let coeffs = transfer_coefficients(&NetworkParams::new(0.7, SourceParams::fitted().eta)).unwrap();
    let state =
        LabeledFockState::vacuum().with(SpatialMode::A, 0, 2).with(SpatialMode::A, 1, 1).with(SpatialMode::B, 0, 2);
    c.bench_function("propagate 2a1a'2b", |b| b.iter(|| propagate(black_box(&state), black_box(&coeffs)).unwrap()));
}

fn ensemble_point(c: &mut Criterion) {
    let model = fitted_ket22();
    c.bench_function("ket22 ensemble probability", |b| b.iter(|| model.probability(black_box(0.3)).unwrap()));
}

fn full_scan(c: &mut Criterion) {
    let model = fitted_ket22();
    let phis = full_grid(721);
    let mut group = c.benchmark_group("scan");
    group.sample_size(10);
    group.bench_function("ket22 721 points + contrast", |b| {
        b.iter(|| contrast(&model.scan(black_box(&phis)).unwrap()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, single_state, ensemble_point, full_scan);
criterion_main!(benches);
