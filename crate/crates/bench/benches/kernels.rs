use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lmgsim::scrambling::DEFAULT_DELTA_PHI_GRID;
use lmgsim::tomography::{default_settings, direct_fotoc};
use lmgsim::{
    antisqueezing, reconstruct, simulate_measurements, DensityMatrix, LindbladIntegrator, LindbladSpec, Propagator,
    ReconstructionConfig, SatinConfig, SatinEngine, SpinAxis, SpinState, HamiltonianSpec,
};
use lmgsim_bench::Fixture;

fn propagation(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagation");
    for n in [50, 200, 400] {
        let f = Fixture::new(n);
        group.bench_with_input(BenchmarkId::new("diagonalize", n), &f, |b, f| b.iter(|| Propagator::new(black_box(&f.h))));
        let prop = Propagator::new(&f.h).unwrap();
        group.bench_with_input(BenchmarkId::new("evolve_and_antisqueezing", n), &f, |b, f| {
            b.iter(|| antisqueezing(&f.ops, &f.x.propagate(&prop, f.time(0.8))))
        });
    }
    group.finish();
}

fn protocols(c: &mut Criterion) {
    let mut group = c.benchmark_group("protocols");
    let f = Fixture::new(200);
    let cfg = SatinConfig::new(HamiltonianSpec::critical_lmg(1.0, f.params), 0.0);
    let engine = SatinEngine::new(&f.ops, &cfg).unwrap();
    group.bench_function("satin_gain_n200", |b| b.iter(|| engine.metrological_gain(&f.x, f.time(0.8))));
    let axis = cfg.signal_axis();
    group.bench_function("direct_fotoc_n200", |b| {
        b.iter(|| direct_fotoc(&f.ops, &f.x, &f.h, &axis, &DEFAULT_DELTA_PHI_GRID, f.time(0.57)))
    });
    group.finish();
}

fn open_system(c: &mut Criterion) {
    let mut group = c.benchmark_group("lindblad");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    let f = Fixture::new(50);
    let spec = LindbladSpec::new(0.05, SpinAxis::z()).unwrap();
    let integrator = LindbladIntegrator::new(&f.h, &spec, &f.ops).unwrap();
    let rho = DensityMatrix::from_pure(&f.x);
    group.bench_function("rk4_n50_schit_0.2", |b| b.iter(|| integrator.evolve(&rho, f.time(0.2), Some(2e-4))));
    group.finish();
}

fn tomography(c: &mut Criterion) {
    let mut group = c.benchmark_group("tomography");
    group.sample_size(10);
    for n in [20, 50] {
        let f = Fixture::new(n);
        let state = f.x.propagate(&Propagator::new(&f.h).unwrap(), f.time(0.57));
        let records = simulate_measurements(&f.ops, &state, &default_settings(30).unwrap(), 7).unwrap();
        group.bench_with_input(BenchmarkId::new("mle_41x30", n), &records, |b, r| {
            b.iter(|| reconstruct(&f.ops, r, &ReconstructionConfig::default()))
        });
    }
    group.finish();
}

criterion_group!(benches, propagation, protocols, open_system, tomography);
criterion_main!(benches);
