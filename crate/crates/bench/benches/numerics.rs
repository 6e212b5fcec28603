use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lmem::adiabatic::{
    adiabatic_retrieve, adiabatic_store, optimal_decayless_mode, shape_storage_control, ShapingConfig,
};
use lmem::bessel::{i0e, i0e_complex};
use lmem::fast::fast_retrieve;
use lmem::kernels::retrieval_efficiency;
use lmem::model::{gaussian_like_input, ControlField, Grid, Params, SpinWave};
use lmem::optimizer::{optimal_backward_mode_with, ModeOptions};
use lmem::solver::{simulate, StageSpec};
use lmem::{KernelMatrix, C64};

fn bessel(c: &mut Criterion) {
    c.bench_function("i0e real", |b| b.iter(|| (0..1000).map(|k| i0e(black_box(k as f64 * 0.7))).sum::<f64>()));
    c.bench_function("i0e complex", |b| {
        b.iter(|| (0..1000).map(|k| i0e_complex(black_box(C64::new(k as f64 * 0.5, k as f64 * 0.3))).re).sum::<f64>())
    });
}

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    for d in [10.0, 1000.0] {
        g.bench_with_input(BenchmarkId::new("build", d), &d, |b, &d| b.iter(|| KernelMatrix::new(d)));
        let k = KernelMatrix::new(d);
        let opts = ModeOptions::default();
        g.bench_with_input(BenchmarkId::new("optimal mode", d), &k, |b, k| {
            b.iter(|| optimal_backward_mode_with(k, &opts))
        });
        let s = SpinWave::linear(401);
        g.bench_with_input(BenchmarkId::new("efficiency", d), &d, |b, &d| b.iter(|| retrieval_efficiency(&s, d)));
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    g.sample_size(10);
    let p = Params::resonant(10.0);
    let grid = Grid::new(201, 2001, 10.0).unwrap();
    let control = ControlField::constant(2001, 10.0, 10f64.sqrt());
    let spec = StageSpec::retrieval_forward(control, SpinWave::linear(201));
    g.bench_function("retrieval 201x2001", |b| b.iter(|| simulate(&p, &grid, &spec)));
    g.finish();
}

fn closed_forms(c: &mut Criterion) {
    let mut g = c.benchmark_group("closed form");
    g.sample_size(10);
    let d = 10.0;
    let p = Params::resonant(d);
    let control = ControlField::constant(2001, 10.0, 10f64.sqrt());
    let s = SpinWave::linear(201);
    g.bench_function("adiabatic retrieve", |b| b.iter(|| adiabatic_retrieve(&s, &control, &p)));
    let input = gaussian_like_input(10.0, 2001).unwrap();
    g.bench_function("adiabatic store", |b| b.iter(|| adiabatic_store(&input, &control, &p, 201)));
    let mode = optimal_decayless_mode(d, 1e-12).unwrap().mode;
    let cfg = ShapingConfig::for_params(&p);
    g.bench_function("shape storage control", |b| b.iter(|| shape_storage_control(&input, &mode, &p, &cfg)));
    g.bench_function("fast retrieve d=100", |b| b.iter(|| fast_retrieve(&s, 100.0, 2001)));
    g.finish();
}

criterion_group!(benches, bessel, kernels, solver, closed_forms);
criterion_main!(benches);
