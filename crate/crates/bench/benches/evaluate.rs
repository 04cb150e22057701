use std::f64::consts::FRAC_PI_2;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vqcs_core::coherent::{AngleSchedule, CircuitAmplitude, InitialState};
use vqcs_core::fredholm::{magnetization_z_fixed, QuadratureGrid};
use vqcs_core::observables::{energy_and_gradient, magnetization_x, DEFAULT_NODES};
use vqcs_core::optimizer::light_cone_sites;
use vqcs_core::{oracle, Field};

/// Deterministic, irregular angles so no benchmark hits a special point.
fn schedule(p: usize) -> AngleSchedule {
    let angle = |j: usize, s: f64| (0.37 * j as f64 + s).sin().abs() * FRAC_PI_2;
    AngleSchedule::new(
        (0..p).map(|j| angle(j, 0.1)).collect(),
        (0..p).map(|j| angle(j, 1.3)).collect(),
    )
}

fn energy_gradient(c: &mut Criterion) {
    let h = Field::new(1.0).unwrap();
    let mut group = c.benchmark_group("energy_and_gradient");
    for p in [4usize, 16, 64] {
        let seq = schedule(p).to_sequence();
        let l = light_cone_sites(p);
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| energy_and_gradient(black_box(&seq), h, l, InitialState::AllZero))
        });
    }
    group.finish();
}

fn transverse_magnetization(c: &mut Criterion) {
    let seq = schedule(32).to_sequence();
    let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
    c.bench_function("m_x/p=32", |b| {
        b.iter(|| magnetization_x(black_box(&src), DEFAULT_NODES))
    });
}

fn order_parameter(c: &mut Criterion) {
    let mut group = c.benchmark_group("m_z_fixed_grid");
    group.sample_size(10);
    let seq = schedule(8).to_sequence();
    let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
    for n in [100usize, 200, 400] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| magnetization_z_fixed(black_box(&src), n))
        });
    }
    group.finish();
}

fn quadrature_rule(c: &mut Criterion) {
    c.bench_function("gauss_legendre/400", |b| {
        b.iter(|| QuadratureGrid::gauss_legendre(black_box(400)))
    });
}

fn statevector(c: &mut Criterion) {
    let mut group = c.benchmark_group("statevector");
    group.sample_size(10);
    let seq = schedule(4).to_sequence();
    for l in [8usize, 12, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, &l| {
            b.iter(|| oracle::simulate(l, black_box(&seq), InitialState::AllZero).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    energy_gradient,
    transverse_magnetization,
    order_parameter,
    quadrature_rule,
    statevector
);
criterion_main!(benches);
