use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geodeph_core::adiabatic::{
    eigenframe, uniform_grid, ControlSchedule, Level, NoiseCoupling, QubitHamiltonian,
};
use geodeph_core::ensemble::overlap_integral;
use geodeph_core::gate::{bell_gate_run, calibrate_ising, GateConfig};
use geodeph_core::linalg::Spinor;
use geodeph_core::noise::{make_noise_path, Kernel, NoiseSpec};
use geodeph_core::shor::{success_probability, AmplitudeMode, NoisyAmplitudeModel, ShorInstance};
use geodeph_core::{evolve_exact, C64};

fn qubit() -> QubitHamiltonian {
    let schedule = ControlSchedule::new(2000.0, PI / 3.0, 1.0, 1).unwrap();
    QubitHamiltonian::new(1.0, schedule, NoiseCoupling::rf_x()).unwrap()
}

fn noise(c: &mut Criterion) {
    let spec = NoiseSpec::new(50.0, 0.01, 3).unwrap();
    c.bench_function("ou_path_3d_1e4", |b| {
        b.iter(|| make_noise_path(&spec, 1.0, 1e-4, black_box(7)).unwrap())
    });
}

fn propagation(c: &mut Criterion) {
    let h = qubit();
    let spec = NoiseSpec::new(50.0, 0.01, 1).unwrap();
    let path = make_noise_path(&spec, 1.0, 1e-3, 11).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi: Spinor = [C64::new(s, 0.0), C64::new(s, 0.0)];
    c.bench_function("evolve_exact_20k_slices", |b| {
        b.iter(|| evolve_exact(&h, Some(black_box(&path)), &psi, 20_000).unwrap())
    });
    let frame = eigenframe(&h, &uniform_grid(0.0, 1.0, 4096)).unwrap();
    c.bench_function("overlap_integral_4096", |b| {
        b.iter(|| {
            overlap_integral(
                &frame,
                &NoiseCoupling::rf_x(),
                Kernel::Exponential,
                0.01,
                Level::Lower,
                Level::Upper,
            )
            .unwrap()
        })
    });
}

fn gate(c: &mut Criterion) {
    let schedule = ControlSchedule::new(4000.0, PI / 3.0, 1.0, 1).unwrap();
    let h = calibrate_ising(1.0, schedule, NoiseCoupling::rf_x(), 0.8).unwrap();
    let mut cfg = GateConfig::new(h, NoiseSpec::new(20.0, 0.005, 1).unwrap());
    cfg.realizations = 64;
    let mut group = c.benchmark_group("gate");
    group.sample_size(10);
    group.bench_function("bell_gate_64", |b| {
        b.iter(|| bell_gate_run(black_box(&cfg)).unwrap())
    });
    group.finish();
}

fn shor(c: &mut Criterion) {
    let inst = ShorInstance::new(21, 2, 0).unwrap();
    let model = NoisyAmplitudeModel::new(inst, 0.5, AmplitudeMode::General).unwrap();
    c.bench_function("shor_success_21", |b| {
        b.iter(|| success_probability(black_box(&model)))
    });
    c.bench_function("shor_prob_averaged_21", |b| {
        b.iter(|| model.prob_averaged(black_box(43)).unwrap())
    });
}

criterion_group!(benches, noise, propagation, gate, shor);
criterion_main!(benches);
