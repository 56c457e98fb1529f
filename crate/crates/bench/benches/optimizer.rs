use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use simbeam::cascade::effective_vectors;
use simbeam::experiments::ExperimentConfig;
use simbeam::optimizer::{build_quadratic, AdmmSolver, AdmmState, PenaltyPolicy};
use simbeam::{ChannelModel, OptimizerConfig, Resolution, WmmseState};

fn setup(layers: usize) -> (ChannelModel, OptimizerConfig, WmmseState) {
    let cfg = ExperimentConfig::default();
    let model = cfg.channel_model(layers, 1).unwrap();
    let opt = cfg.optimizer_config(Resolution::Bits(2));
    let state = WmmseState::initial(&model, &opt, 1).unwrap();
    (model, opt, state)
}

fn outer_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("outer_iteration");
    group.sample_size(20);
    for layers in [2, 4, 6] {
        let (model, opt, state) = setup(layers);
        group.bench_with_input(BenchmarkId::from_parameter(layers), &layers, |b, _| {
            b.iter_batched(
                || state.clone(),
                |mut s| black_box(s.outer_step(&model, &opt).unwrap()),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn cascade(c: &mut Criterion) {
    let mut group = c.benchmark_group("effective_vectors");
    for layers in [2, 4, 6] {
        let (model, _, state) = setup(layers);
        group.bench_with_input(BenchmarkId::from_parameter(layers), &layers, |b, _| {
            b.iter(|| black_box(effective_vectors(&state.stack, &model).unwrap()))
        });
    }
    group.finish();
}

fn admm(c: &mut Criterion) {
    let (model, _, state) = setup(3);
    let quad = build_quadratic(&model, &state.rx, &state.stack, &state.power.p, 1).unwrap();
    let beta = PenaltyPolicy::TraceScaled(1.0).penalty(&quad);
    c.bench_function("admm_factor_n49", |b| b.iter(|| black_box(AdmmSolver::new(&quad, beta).unwrap())));
    let solver = AdmmSolver::new(&quad, beta).unwrap();
    c.bench_function("admm_step_n49", |b| {
        b.iter_batched(
            || AdmmState::start(state.stack.phi(1), beta),
            |mut st| {
                solver.step(&mut st, Resolution::Bits(2)).unwrap();
                black_box(st)
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, outer_iteration, cascade, admm);
criterion_main!(benches);
