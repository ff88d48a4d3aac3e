use std::f64::consts::PI;

use geodeph_core::adiabatic::{
    solid_angle_phase, AdiabaticLimits, ControlSchedule, Direction, Level, NoiseCoupling,
};
use geodeph_core::gate::{
    bell_gate_run, calibrate_ising, closed_form_gate_phases, conditional_phase, evolve_pair_exact,
    gate_onset_ratio, gate_overlap_sum, gate_phases, level_index_map, level_path,
    local_frame_correction, GateConfig, GatePhaseModel, PairHamiltonian, PairLevel, PulseSequence,
    Qubit,
};
use geodeph_core::linalg::C64;
use geodeph_core::mc::{split_seed, Estimate};
use geodeph_core::noise::{make_noise_path, Kernel, NoiseSpec};

const TAU_C: f64 = 0.005;

fn schedule() -> ControlSchedule {
    ControlSchedule::new(4000.0, PI / 3.0, 1.0, 1).unwrap()
}

fn uniform() -> PairHamiltonian {
    PairHamiltonian::uniform(1.0, schedule(), NoiseCoupling::rf_x()).unwrap()
}

fn bell_sum() -> f64 {
    32.0 * TAU_C * 1.0 * (PI / 3.0).sin().powi(2)
}

fn gate_config(h: PairHamiltonian, sigma2: f64, realizations: usize) -> GateConfig {
    let mut cfg = GateConfig::new(h, NoiseSpec::new(sigma2, TAU_C, 1).unwrap());
    cfg.realizations = realizations;
    cfg.master_seed = 99;
    cfg
}

/// σ² for Bell-pair phase variance `v` with the closed-form overlap sum.
fn sigma2_for(v: f64) -> f64 {
    4.0 * v / bell_sum()
}

#[test]
fn every_level_returns_to_itself() {
    for k in PairLevel::ALL {
        assert_eq!(level_index_map(k, 4).unwrap(), k);
        let p = level_path(k);
        for w in p.windows(2) {
            assert_eq!((w[0].i1 ^ w[1].i1) + (w[0].i2 ^ w[1].i2), 1);
        }
    }
}

#[test]
fn bell_overlap_sum_matches_closed_form() {
    let seq = PulseSequence::standard(1.0);
    let (k, j) = (PairLevel::new(0, 0).unwrap(), PairLevel::new(1, 1).unwrap());
    for tau in [TAU_C, 1e-3] {
        let s = gate_overlap_sum(&uniform(), &seq, Kernel::Exponential, tau, k, j).unwrap();
        let closed = 32.0 * tau * (PI / 3.0).sin().powi(2);
        assert!((s / closed - 1.0).abs() < 0.05, "τ={tau}: {s} vs {closed}");
    }
}

#[test]
fn numerical_phases_match_solid_angle_sums() {
    let h = calibrate_ising(1.0, schedule(), NoiseCoupling::rf_x(), 1.3).unwrap();
    let seq = PulseSequence::standard(1.0);
    let model = GatePhaseModel::new(&h, &seq, 400).unwrap();
    let closed = closed_form_gate_phases(&h, &seq);
    for k in PairLevel::ALL {
        assert!(
            (model.gamma_a(k) - closed[k.index()]).abs() < 1e-8 * closed[k.index()].abs().max(1.0)
        );
    }
    // drop every dynamical term: the conditional phase is unchanged
    let mut geometric = [0.0; 4];
    for k in PairLevel::ALL {
        let path = level_path(k);
        for (l, seg) in seq.segments.iter().enumerate() {
            for q in Qubit::BOTH {
                let lv = Level::from_bit(path[l].bit(q));
                let theta = h.level_cone_angles[path[l].index()][q.index()];
                geometric[k.index()] -= seg.direction.sign() * solid_angle_phase(lv, theta);
            }
        }
    }
    assert!((conditional_phase(&geometric) - model.conditional_phase()).abs() < 1e-9);
    assert!((model.conditional_phase() - 1.3).abs() < 1e-8);
}

#[test]
fn uniform_levels_give_no_bell_phase() {
    let model = GatePhaseModel::new(&uniform(), &PulseSequence::standard(1.0), 200).unwrap();
    assert!(
        (model.gamma_a(PairLevel::new(0, 0).unwrap())
            - model.gamma_a(PairLevel::new(1, 1).unwrap()))
        .abs()
            < 1e-9
    );
    assert!(model.conditional_phase().abs() < 1e-9);
}

#[test]
fn corrected_gate_is_diagonal_controlled_phase() {
    let phi = 2.2;
    let h = calibrate_ising(1.0, schedule(), NoiseCoupling::rf_x(), phi).unwrap();
    let model = GatePhaseModel::new(&h, &PulseSequence::standard(1.0), 200).unwrap();
    let c = model.corrected_phases();
    for k in PairLevel::ALL {
        // exp(−iΓ'_k) = exp(i x y φ)
        let expected = -f64::from(k.i1 * k.i2) * phi;
        assert!((c[k.index()] - expected).abs() < 1e-8, "{k:?}");
    }
    assert_eq!(local_frame_correction(&c), c);
}

#[test]
fn noiseless_and_short_noise_paths() {
    let seq = PulseSequence::standard(1.0);
    let lim = AdiabaticLimits::default();
    let zero = make_noise_path(
        &NoiseSpec::new(0.0, TAU_C, 1).unwrap(),
        4.0,
        TAU_C / 10.0,
        1,
    )
    .unwrap();
    let r = gate_phases(&seq, &uniform(), &zero, PairLevel::new(0, 1).unwrap(), &lim).unwrap();
    assert_eq!(r.gamma_s, 0.0);
    let short = make_noise_path(
        &NoiseSpec::new(1.0, TAU_C, 1).unwrap(),
        3.0,
        TAU_C / 10.0,
        1,
    )
    .unwrap();
    assert!(gate_phases(
        &seq,
        &uniform(),
        &short,
        PairLevel::new(0, 1).unwrap(),
        &lim
    )
    .is_err());
}

#[test]
fn exact_two_qubit_dynamics_match_gate_phases() {
    let h = uniform();
    let seq = PulseSequence::standard(1.0);
    let noise = make_noise_path(
        &NoiseSpec::new(10.0, TAU_C, 1).unwrap(),
        4.0,
        TAU_C / 10.0,
        5,
    )
    .unwrap();
    let c = [
        C64::new(0.5, 0.0),
        C64::new(0.0, 0.5),
        C64::new(-0.5, 0.0),
        C64::new(0.5, 0.0),
    ];
    let out = evolve_pair_exact(&h, &seq, Some(&noise), &c, 200_000).unwrap();
    let model = GatePhaseModel::for_noise_step(&h, &seq, noise.dt()).unwrap();
    for k in PairLevel::ALL {
        let g = model.gamma_a(k) + model.gamma_s(k, &noise).unwrap();
        let predicted = c[k.index()] * C64::from_polar(1.0, -g);
        assert!(
            (out[k.index()] - predicted).norm() < 1e-2,
            "{k:?}: {} vs {predicted}",
            out[k.index()]
        );
        assert!(model.gamma_s(k, &noise).unwrap().abs() > 1e-2);
    }
    let ising = calibrate_ising(1.0, schedule(), NoiseCoupling::rf_x(), 1.0).unwrap();
    assert!(evolve_pair_exact(&ising, &seq, None, &c, 10).is_err());
}

#[test]
fn segment_increments_are_uncorrelated() {
    let h = uniform();
    let seq = PulseSequence::standard(1.0);
    let spec = NoiseSpec::new(100.0, TAU_C, 1).unwrap();
    let model = GatePhaseModel::for_noise_step(&h, &seq, TAU_C / 10.0).unwrap();
    let (k, j) = (PairLevel::new(0, 0).unwrap(), PairLevel::new(1, 1).unwrap());
    let mut products = Vec::new();
    let mut totals = Vec::new();
    let mut parts = [Vec::new(), Vec::new()];
    for i in 0..2000 {
        let noise = make_noise_path(&spec, 4.0, TAU_C / 10.0, split_seed(3, i)).unwrap();
        let a = model.segment_gamma_s(k, &noise).unwrap();
        let b = model.segment_gamma_s(j, &noise).unwrap();
        let d: Vec<f64> = (0..4).map(|l| a[l] - b[l]).collect();
        assert!(d[1].abs() < 1e-9 && d[3].abs() < 1e-9);
        products.push(d[0] * d[2]);
        parts[0].push(d[0]);
        parts[1].push(d[2]);
        totals.push(d.iter().sum::<f64>());
    }
    let v0 = Estimate::from_samples(&parts[0].iter().map(|x| x * x).collect::<Vec<_>>()).mean;
    let v2 = Estimate::from_samples(&parts[1].iter().map(|x| x * x).collect::<Vec<_>>()).mean;
    let cov = Estimate::from_samples(&products);
    assert!(cov.within(0.0, 3.0), "{cov:?}");
    assert!(cov.mean.abs() < 0.1 * (v0 * v2).sqrt());
    let total = Estimate::from_samples(&totals.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!(total.within(v0 + v2, 3.0));
}

#[test]
fn fidelity_is_one_without_noise() {
    let r = bell_gate_run(&gate_config(uniform(), 0.0, 64)).unwrap();
    assert!((r.fidelity.mean - 1.0).abs() < 1e-12);
    assert_eq!(r.decoherence_factor, 1.0);
}

#[test]
fn fidelity_follows_closed_form_and_saturates() {
    let h = calibrate_ising(1.0, schedule(), NoiseCoupling::rf_x(), 0.6).unwrap();
    let mut last = f64::INFINITY;
    for v in [0.25, 1.0, 3.0, 8.0, 4.0 * PI * PI] {
        let r = bell_gate_run(&gate_config(h, sigma2_for(v), 4096)).unwrap();
        assert!(
            r.fidelity.within(r.fidelity_closed_form, 3.0),
            "v={v}: {:?} vs {}",
            r.fidelity,
            r.fidelity_closed_form
        );
        assert!(r.fidelity.mean <= last + 1e-12);
        assert!((r.conditional_phase - 0.6).abs() < 1e-8);
        last = r.fidelity.mean;
        if v >= 4.0 * PI * PI {
            assert!((r.fidelity.mean - 0.5).abs() <= 0.02);
        }
    }
}

#[test]
fn gate_onset_ratio_is_one_at_two_pi_spread() {
    let (gamma, bw, period, s2) = (1.7, 3.0, 0.9, 0.4);
    // v = γ²σ²·32 τc T sin²θ₀ / 4 = 4π²
    let tau = 2e-3;
    let sigma2 = 4.0 * PI * PI * 4.0 / (gamma * gamma * 32.0 * tau * period * s2);
    let r = gate_onset_ratio(1.0, gamma, bw, sigma2 * bw, tau, period, s2).unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
    let twice = gate_onset_ratio(1.0, gamma, bw, sigma2 * bw, 2.0 * tau, period, s2).unwrap();
    assert!((twice - 2.0).abs() < 1e-12);
}

#[test]
fn fidelity_onset_sweep() {
    // F̄ = ½ + ½ exp(−v/2) reaches 0.52 at v = −2 ln 0.04, i.e. ratio ≈ 0.16
    let predicted = -2.0 * 0.04f64.ln() / (4.0 * PI * PI);
    let ratios: Vec<f64> = (0..16).map(|i| 0.05 * 1.2f64.powi(i)).collect();
    let mut crossing = None;
    let mut prev: Option<(f64, f64)> = None;
    for &ratio in &ratios {
        let r = bell_gate_run(&gate_config(
            uniform(),
            sigma2_for(4.0 * PI * PI * ratio),
            4096,
        ))
        .unwrap();
        assert!((r.onset_ratio / ratio - 1.0).abs() < 0.05);
        let f = r.fidelity.mean;
        if let Some((r0, f0)) = prev {
            if f0 >= 0.52 && f < 0.52 {
                crossing = Some(r0 + (0.52 - f0) * (ratio - r0) / (f - f0));
                break;
            }
        }
        prev = Some((ratio, f));
    }
    let crossing = crossing.expect("fidelity never fell below 0.52");
    assert!(
        (crossing - predicted).abs() < 0.05,
        "{crossing} vs {predicted}"
    );
}

#[test]
fn reversed_segments_use_reversed_schedules() {
    let h = uniform();
    let q = h
        .qubit_hamiltonian(
            PairLevel::new(0, 0).unwrap(),
            Qubit::Second,
            Direction::Reversed,
        )
        .unwrap();
    assert_eq!(q.schedule.azimuth_rate(), -2.0 * PI);
}
