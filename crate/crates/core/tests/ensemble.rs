use std::f64::consts::{FRAC_1_SQRT_2, PI};

use geodeph_core::adiabatic::{
    eigenframe, uniform_grid, ControlSchedule, Level, NoiseCoupling, QubitHamiltonian,
};
use geodeph_core::ensemble::{
    decoherence_factor_analytic, decoherence_report, exponential_overlap, nmr_onset_ratio,
    nmr_overlap, nmr_sin2_theta, noise_variance_for, onset_ratio, overlap_integral,
    overlap_integral_converged, overlap_quadrature, predicted_density, run_ensemble,
    transverse_magnetization, variance_analytic, Engine, EnsembleConfig,
};
use geodeph_core::linalg::C64;
use geodeph_core::mc::{Estimate, ShapeStatistics};
use geodeph_core::noise::{Kernel, NoiseSpec};

fn hamiltonian(theta: f64, magnitude: f64) -> QubitHamiltonian {
    QubitHamiltonian::new(
        1.0,
        ControlSchedule::new(magnitude, theta, 1.0, 1).unwrap(),
        NoiseCoupling::rf_x(),
    )
    .unwrap()
}

fn superposition() -> [C64; 2] {
    [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)]
}

/// Ensemble with the noise variance tuned to give phase variance `v`.
fn tuned(v: f64, engine: Engine, realizations: usize) -> EnsembleConfig {
    let h = hamiltonian(PI / 3.0, 2000.0);
    let sigma2 = noise_variance_for(&h, Kernel::Exponential, 0.01, v).unwrap();
    let mut cfg = EnsembleConfig::new(h, NoiseSpec::new(sigma2, 0.01, 1).unwrap(), superposition());
    cfg.engine = engine;
    cfg.realizations = realizations;
    cfg.master_seed = 2024;
    cfg
}

#[test]
fn rf_overlap_matches_leading_order() {
    for theta in [PI / 6.0, PI / 3.0, PI / 2.0] {
        let h = hamiltonian(theta, 100.0);
        for tau in [1e-3, 5e-3] {
            let i = overlap_integral_converged(
                &h,
                Kernel::Exponential,
                tau,
                Level::Upper,
                Level::Lower,
            )
            .unwrap();
            let closed = nmr_overlap(tau, 1.0, theta.sin().powi(2));
            assert!(
                (i / closed - 1.0).abs() < 0.05,
                "θ={theta} τ={tau}: {i} vs {closed}"
            );
        }
    }
    let flat = hamiltonian(0.0, 100.0);
    let i =
        overlap_integral_converged(&flat, Kernel::Exponential, 1e-3, Level::Upper, Level::Lower)
            .unwrap();
    assert!(i.abs() < 1e-12);
}

#[test]
fn constant_profile_with_flat_kernel_is_separable() {
    let c = 0.7;
    let profile = vec![[c, 0.0, 0.0]; 1001];
    let h = 2.0 / 1000.0;
    let brute = overlap_quadrature(&profile, h, |_| 1.0);
    assert!((brute - c * c * 4.0).abs() < 1e-12);
    // a very long correlation time approaches the flat kernel
    let fast = exponential_overlap(&profile, h, 1e9);
    assert!((fast - c * c * 4.0).abs() < 1e-8);
}

#[test]
fn overlap_uses_level_difference() {
    let h = hamiltonian(1.0, 50.0);
    let f = eigenframe(&h, &uniform_grid(0.0, 1.0, 4096)).unwrap();
    let a = overlap_integral(
        &f,
        &h.noise_coupling,
        Kernel::Exponential,
        0.01,
        Level::Upper,
        Level::Lower,
    )
    .unwrap();
    let b = overlap_integral(
        &f,
        &h.noise_coupling,
        Kernel::Exponential,
        0.01,
        Level::Lower,
        Level::Upper,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn nmr_onset_is_the_general_condition() {
    let (eta, gamma, t, tau, p, bw) = (3.0, 2.5, 0.8, 1e-3, 40.0, 7.0);
    let s2 = nmr_sin2_theta(10.0, 2.0).unwrap();
    assert!((s2 - 4.0 / (4.0 + 64.0)).abs() < 1e-15);
    let general = onset_ratio(p, bw, gamma, eta, nmr_overlap(tau, t, s2)).unwrap();
    let nmr = nmr_onset_ratio(eta, gamma, t, s2, p, tau, bw).unwrap();
    assert!((general - nmr).abs() < 1e-12 * nmr);
}

#[test]
fn onset_ratio_is_one_at_two_pi_spread() {
    let (eta, gamma, bw, overlap) = (2.0, 1.3, 5.0, 0.04);
    let sigma2 = 4.0 * PI * PI * 4.0 / (eta * gamma * gamma * overlap);
    assert!(
        (variance_analytic(eta, gamma, sigma2, overlap).unwrap() - 4.0 * PI * PI).abs() < 1e-12
    );
    let r = onset_ratio(sigma2 * bw, bw, gamma, eta, overlap).unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
}

#[test]
fn variance_two_gives_one_over_e_coherence() {
    let exact = run_ensemble(&tuned(2.0, Engine::ExactPropagation, 1024)).unwrap();
    let analytic = run_ensemble(&tuned(2.0, Engine::AnalyticPhase, 4096)).unwrap();
    let target = 0.5 * (-1.0f64).exp();
    for out in [&exact, &analytic] {
        let rho = out.density.get(1, 0);
        let se = out.density.standard_error(1, 0);
        assert!(
            (rho.norm() - target).abs() <= 3.0 * se,
            "{} ± {se}",
            rho.norm()
        );
    }
    // the first 1024 realizations share noise paths, so the engines agree closely
    let paired = run_ensemble(&tuned(2.0, Engine::AnalyticPhase, 1024)).unwrap();
    let d = (exact.density.get(1, 0) - paired.density.get(1, 0)).norm();
    assert!(d < exact.density.standard_error(1, 0), "{d}");
}

#[test]
fn coherence_follows_gaussian_law() {
    for v in [0.5, 2.0, 8.0] {
        let cfg = tuned(v, Engine::AnalyticPhase, 4096);
        let out = run_ensemble(&cfg).unwrap();
        let rep = decoherence_report(&cfg, &out).unwrap();
        assert!((rep.analytic_variance / v - 1.0).abs() < 1e-9);
        let z = (rep.mc_factor.norm() - rep.analytic_factor).abs() / rep.mc_factor_error;
        assert!(
            z <= 3.0,
            "v={v}: {} vs {}",
            rep.mc_factor.norm(),
            rep.analytic_factor
        );
    }
}

#[test]
fn stochastic_phase_is_gaussian_with_zero_mean() {
    let cfg = tuned(2.0, Engine::AnalyticPhase, 4096);
    let out = run_ensemble(&cfg).unwrap();
    let d = out.phase_differences(Level::Upper, Level::Lower);
    let shape = ShapeStatistics::from_samples(&d);
    assert!(shape.looks_gaussian(4.0), "{shape:?}");
    assert!(Estimate::from_samples(&d).within(0.0, 3.0));
    assert!((shape.variance / 2.0 - 1.0).abs() < 0.1);
}

#[test]
fn exact_density_is_physical() {
    let cfg = tuned(2.0, Engine::ExactPropagation, 256);
    let out = run_ensemble(&cfg).unwrap();
    let rho = &out.density;
    assert!(rho.hermiticity_defect() < 1e-12);
    assert!((rho.trace().re - 1.0).abs() < 1e-10 && rho.trace().im.abs() < 1e-12);
    assert!(rho.min_eigenvalue() >= -1e-10);
    for k in 0..2 {
        assert!((rho.get(k, k).re - 0.5).abs() <= 3.0 * rho.standard_error(k, k).max(1e-6));
    }
}

#[test]
fn coherence_decreases_with_noise_power() {
    let mut last = f64::INFINITY;
    for v in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let m = run_ensemble(&tuned(v, Engine::AnalyticPhase, 4096))
            .unwrap()
            .density
            .get(1, 0)
            .norm();
        assert!(m <= last, "v={v}: {m} > {last}");
        last = m;
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = tuned(2.0, Engine::AnalyticPhase, 512);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_ensemble(&cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.density, b.density);
    assert_eq!(a.records, b.records);
}

#[test]
fn two_pi_spread_hides_the_geometric_phase() {
    let cfg = tuned(4.0 * PI * PI, Engine::AnalyticPhase, 4096);
    let rho = predicted_density(&cfg).unwrap();
    let (x, y) = transverse_magnetization(&rho).unwrap();
    assert!(x.hypot(y) <= 1e-8);
    assert!((x.hypot(y) - decoherence_factor_analytic(4.0 * PI * PI).unwrap()).abs() < 1e-12);
    let mc = run_ensemble(&cfg).unwrap().density;
    assert!(mc.get(1, 0).norm() <= 3.0 * mc.standard_error(1, 0));
}

#[test]
fn noiseless_magnetization_carries_the_deterministic_phase() {
    let cfg = tuned(0.0, Engine::ExactPropagation, 2);
    let out = run_ensemble(&cfg).unwrap();
    let (x, y) = transverse_magnetization(&out.density).unwrap();
    assert!((x.hypot(y) - 1.0).abs() < 1e-3);
    let ga = out.records[1].gamma_a - out.records[0].gamma_a;
    let d = (y.atan2(x) + ga).rem_euclid(2.0 * PI);
    assert!(d.min(2.0 * PI - d) < 1e-2, "{d}");
}
