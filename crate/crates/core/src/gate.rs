//! Geometric controlled-phase gate `B(φ)` built from a four-segment pulse
//! sequence on two qubits.
//!
//! Each two-qubit level `k = (i₁, i₂)` is treated as a pair of single-qubit
//! levels, each qubit precessing in an effective field that may depend on its
//! partner's bit (see [`PairHamiltonian::ising`]). Segment `l` runs the control
//! loop in direction `C` or `C̄` on pair level `k_l` and ends with an ideal π
//! pulse, so every level visits all four pair levels and dynamical phases
//! cancel from conditional-phase combinations.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    check_adiabaticity, eigenframe, enforce_adiabaticity, level_state, propagator_exact,
    solid_angle_phase, uniform_grid, AdiabaticLimits, ControlSchedule, Direction, Level,
    NoiseCoupling, PhaseRecord, QubitHamiltonian,
};
use crate::ensemble::{
    decoherence_factor_analytic, exponential_overlap, AveragedDensity, DEFAULT_MAX_RECORDS,
};
use crate::error::{Error, Result};
use crate::linalg::{dot3, Mat2, C64, ZERO};
use crate::mc::{ordered_map, pairwise_sum, split_seed, ComplexEstimate, Estimate};
use crate::noise::{make_noise_path, Kernel, NoisePath, NoiseSpec};

/// Two-qubit computational level `|i₁ i₂⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairLevel {
    pub i1: u8,
    pub i2: u8,
}

impl PairLevel {
    pub const ALL: [PairLevel; 4] = [
        PairLevel { i1: 0, i2: 0 },
        PairLevel { i1: 0, i2: 1 },
        PairLevel { i1: 1, i2: 0 },
        PairLevel { i1: 1, i2: 1 },
    ];

    pub fn new(i1: u8, i2: u8) -> Result<Self> {
        if i1 > 1 || i2 > 1 {
            return Err(Error::invalid(format!(
                "level bits must be 0 or 1, got ({i1}, {i2})"
            )));
        }
        Ok(PairLevel { i1, i2 })
    }

    /// Position in the `|q₁ q₂⟩` ordered basis.
    pub fn index(self) -> usize {
        2 * self.i1 as usize + self.i2 as usize
    }

    pub fn from_index(i: usize) -> PairLevel {
        PairLevel::ALL[i]
    }

    pub fn bit(self, qubit: Qubit) -> u8 {
        match qubit {
            Qubit::First => self.i1,
            Qubit::Second => self.i2,
        }
    }

    pub fn flip(self, qubit: Qubit) -> PairLevel {
        match qubit {
            Qubit::First => PairLevel {
                i1: 1 - self.i1,
                ..self
            },
            Qubit::Second => PairLevel {
                i2: 1 - self.i2,
                ..self
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qubit {
    First,
    Second,
}

impl Qubit {
    pub const BOTH: [Qubit; 2] = [Qubit::First, Qubit::Second];

    pub fn index(self) -> usize {
        match self {
            Qubit::First => 0,
            Qubit::Second => 1,
        }
    }

    pub fn partner(self) -> Qubit {
        match self {
            Qubit::First => Qubit::Second,
            Qubit::Second => Qubit::First,
        }
    }
}

/// `k_j = (i₁ ⊕ Σ_{l=1}^{j} l, i₂ ⊕ Σ_{l=0}^{j−1} l)` with sums taken mod 2.
pub fn level_index_map(k: PairLevel, j: usize) -> Result<PairLevel> {
    if j > 4 {
        return Err(Error::invalid(format!(
            "segment step must be in 0..=4, got {j}"
        )));
    }
    let s1: usize = (1..=j).sum();
    let s2: usize = (0..j).sum();
    Ok(PairLevel {
        i1: k.i1 ^ (s1 % 2) as u8,
        i2: k.i2 ^ (s2 % 2) as u8,
    })
}

/// The sequence of levels `k_0 … k_4`.
pub fn level_path(k: PairLevel) -> [PairLevel; 5] {
    let mut out = [k; 5];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = level_index_map(k, j).expect("j in range");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub direction: Direction,
    /// Qubit flipped by the π pulse closing the segment.
    pub pi_pulse_target: Qubit,
}

/// `P = (C π₁)(C̄ π₂)(C π₁)(C̄ π₂)` over windows `[t₀ + lT, t₀ + (l+1)T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub period: f64,
    pub start: f64,
    pub segments: [Segment; 4],
}

impl PulseSequence {
    pub fn standard(period: f64) -> Self {
        let a = Segment {
            direction: Direction::Forward,
            pi_pulse_target: Qubit::First,
        };
        let b = Segment {
            direction: Direction::Reversed,
            pi_pulse_target: Qubit::Second,
        };
        PulseSequence {
            period,
            start: 0.0,
            segments: [a, b, a, b],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::invalid(format!(
                "segment period must be > 0, got {}",
                self.period
            )));
        }
        if !(self.start >= 0.0) {
            return Err(Error::invalid("sequence start must be >= 0"));
        }
        let s = &self.segments;
        let structured = s[0].direction == Direction::Forward
            && s[1].direction == Direction::Reversed
            && s[0].pi_pulse_target == Qubit::First
            && s[1].pi_pulse_target == Qubit::Second
            && s[2] == s[0]
            && s[3] == s[1];
        if !structured {
            return Err(Error::invalid(
                "pulse sequence must be (C π₁)(C̄ π₂)(C π₁)(C̄ π₂)",
            ));
        }
        Ok(())
    }

    pub fn window(&self, l: usize) -> (f64, f64) {
        let t0 = self.start + l as f64 * self.period;
        (t0, t0 + self.period)
    }

    pub fn duration(&self) -> f64 {
        4.0 * self.period
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration()
    }
}

/// Two qubits driven by one control field, with effective cone angle and field
/// magnitude per (pair level, qubit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairHamiltonian {
    pub coupling: f64,
    /// Base schedule; its direction and cycle count are overridden per segment.
    pub schedule: ControlSchedule,
    /// Noise enters both qubits through `Ô₁ + Ô₂`.
    pub noise_coupling: NoiseCoupling,
    /// `[level index][qubit index]`
    pub level_cone_angles: [[f64; 2]; 4],
    pub level_magnitudes: [[f64; 2]; 4],
    /// Longitudinal coupling that produced the angles, if any.
    pub ising_field: f64,
}

impl PairHamiltonian {
    /// Both qubits see the bare control field in every level.
    pub fn uniform(
        coupling: f64,
        schedule: ControlSchedule,
        noise_coupling: NoiseCoupling,
    ) -> Result<Self> {
        PairHamiltonian::ising(coupling, schedule, noise_coupling, 0.0)
    }

    /// Qubit `a` sees `B_z = |B| cos θ₀ ± b_zz`, the sign `+` when its partner
    /// is in `|0⟩`, as from a `b_zz σ_z⊗σ_z` term in mean field.
    pub fn ising(
        coupling: f64,
        schedule: ControlSchedule,
        noise_coupling: NoiseCoupling,
        ising_field: f64,
    ) -> Result<Self> {
        let (st, ct) = schedule.cone_angle.sin_cos();
        let bx = schedule.magnitude * st;
        let mut angles = [[0.0; 2]; 4];
        let mut mags = [[0.0; 2]; 4];
        for k in PairLevel::ALL {
            for q in Qubit::BOTH {
                let s = if k.bit(q.partner()) == 0 { 1.0 } else { -1.0 };
                let bz = schedule.magnitude * ct + s * ising_field;
                angles[k.index()][q.index()] = if ising_field == 0.0 {
                    schedule.cone_angle
                } else {
                    bx.atan2(bz)
                };
                mags[k.index()][q.index()] = if ising_field == 0.0 {
                    schedule.magnitude
                } else {
                    (bx * bx + bz * bz).sqrt()
                };
            }
        }
        let h = PairHamiltonian {
            coupling,
            schedule,
            noise_coupling,
            level_cone_angles: angles,
            level_magnitudes: mags,
            ising_field,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for k in PairLevel::ALL {
            for q in Qubit::BOTH {
                self.qubit_hamiltonian(k, q, Direction::Forward)?;
            }
        }
        Ok(())
    }

    /// Single-qubit Hamiltonian seen by `qubit` while the pair is in level `k`.
    pub fn qubit_hamiltonian(
        &self,
        k: PairLevel,
        qubit: Qubit,
        direction: Direction,
    ) -> Result<QubitHamiltonian> {
        let schedule = ControlSchedule {
            magnitude: self.level_magnitudes[k.index()][qubit.index()],
            cone_angle: self.level_cone_angles[k.index()][qubit.index()],
            period: self.schedule.period,
            cycles: 1,
            direction,
        };
        QubitHamiltonian::new(self.coupling, schedule, self.noise_coupling)
    }

    pub fn is_uniform(&self) -> bool {
        let a = self.level_cone_angles[0][0];
        let m = self.level_magnitudes[0][0];
        self.level_cone_angles.iter().flatten().all(|&x| x == a)
            && self.level_magnitudes.iter().flatten().all(|&x| x == m)
    }

    pub fn min_gap(&self) -> f64 {
        self.level_magnitudes
            .iter()
            .flatten()
            .fold(f64::INFINITY, |g, &m| g.min(self.coupling * m))
    }
}

/// Closed-form cycle phase `Γ_a` of one qubit level: `E T − d·∮γ̇`.
pub fn closed_form_cycle_phase(
    level: Level,
    coupling: f64,
    magnitude: f64,
    cone_angle: f64,
    period: f64,
    direction: Direction,
) -> f64 {
    level.energy_sign() * 0.5 * coupling * magnitude * period
        - direction.sign() * solid_angle_phase(level, cone_angle)
}

/// Closed-form raw `Γ_a(k)` for each pair level, summed over segments and qubits.
pub fn closed_form_gate_phases(h: &PairHamiltonian, seq: &PulseSequence) -> [f64; 4] {
    let mut out = [0.0; 4];
    for k in PairLevel::ALL {
        let path = level_path(k);
        let mut acc = 0.0;
        for (l, seg) in seq.segments.iter().enumerate() {
            let kl = path[l];
            for q in Qubit::BOTH {
                acc += closed_form_cycle_phase(
                    Level::from_bit(kl.bit(q)),
                    h.coupling,
                    h.level_magnitudes[kl.index()][q.index()],
                    h.level_cone_angles[kl.index()][q.index()],
                    seq.period,
                    seg.direction,
                );
            }
        }
        out[k.index()] = acc;
    }
    out
}

/// Conditional phase `φ = −(Γ₀₀ − Γ₀₁ − Γ₁₀ + Γ₁₁)` of raw level phases.
pub fn conditional_phase(gamma: &[f64; 4]) -> f64 {
    -(gamma[0] - gamma[1] - gamma[2] + gamma[3])
}

/// Removes the single-qubit part of the level phases:
/// `Γ'_k = Γ_k − Γ₀₀ − (Γ₁₀ − Γ₀₀) i₁ − (Γ₀₁ − Γ₀₀) i₂`, leaving `Γ'₁₁ = −φ`.
/// This is a deterministic local z rotation on each qubit.
pub fn local_frame_correction(gamma: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for k in PairLevel::ALL {
        let x = k.i1 as f64;
        let y = k.i2 as f64;
        out[k.index()] =
            gamma[k.index()] - gamma[0] - (gamma[2] - gamma[0]) * x - (gamma[1] - gamma[0]) * y;
    }
    out
}

/// Ising field giving conditional phase `target` (reduced to `[0, 2π)`).
pub fn calibrate_ising(
    coupling: f64,
    schedule: ControlSchedule,
    noise_coupling: NoiseCoupling,
    target: f64,
) -> Result<PairHamiltonian> {
    let seq = PulseSequence::standard(schedule.period);
    let target = target.rem_euclid(TAU);
    let phase = |b: f64| -> Result<f64> {
        let h = PairHamiltonian::ising(coupling, schedule, noise_coupling, b)?;
        Ok(conditional_phase(&closed_form_gate_phases(&h, &seq)))
    };
    if target == 0.0 {
        return PairHamiltonian::uniform(coupling, schedule, noise_coupling);
    }
    let (mut lo, mut hi) = (0.0, 0.5 * schedule.magnitude);
    let span = phase(hi)?;
    if span < target {
        return Err(Error::invalid(format!(
            "conditional phase {target} out of reach: at most {span} for this schedule"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phase(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * schedule.magnitude {
            break;
        }
    }
    PairHamiltonian::ising(coupling, schedule, noise_coupling, 0.5 * (lo + hi))
}

/// Raw `Γ_a(k)` per pair level and the linear map `B_n ↦ Γ_s(k)` on a uniform
/// grid over the four segments.
#[derive(Debug, Clone)]
pub struct GatePhaseModel {
    hamiltonian: PairHamiltonian,
    sequence: PulseSequence,
    steps_per_segment: usize,
    step: f64,
    gamma_a: [f64; 4],
    /// `[level][segment]`, node `i` of segment `l` at `start + lT + i·step`.
    weights: [[Vec<[f64; 3]>; 4]; 4],
}

impl GatePhaseModel {
    pub fn new(h: &PairHamiltonian, seq: &PulseSequence, steps_per_segment: usize) -> Result<Self> {
        seq.validate()?;
        h.validate()?;
        if seq.period != h.schedule.period {
            return Err(Error::invalid(
                "pulse sequence and Hamiltonian disagree on the period",
            ));
        }
        let m = steps_per_segment.max(2);
        let times = uniform_grid(0.0, seq.period, m);
        let step = seq.period / m as f64;
        let g = -0.5 * h.coupling;
        let mut gamma_a = [0.0; 4];
        let mut weights: [[Vec<[f64; 3]>; 4]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![[0.0; 3]; m + 1]));
        for k in PairLevel::ALL {
            let path = level_path(k);
            for (l, seg) in seq.segments.iter().enumerate() {
                let kl = path[l];
                for q in Qubit::BOTH {
                    let qh = h.qubit_hamiltonian(kl, q, seg.direction)?;
                    let frame = eigenframe(&qh, &times)?;
                    let level = Level::from_bit(kl.bit(q));
                    gamma_a[k.index()] += frame.deterministic_phase(level);
                    for i in 0..=m {
                        let trap = if i == 0 || i == m { 0.5 * step } else { step };
                        let o = h.noise_coupling.project(&frame.bloch(level, i));
                        let w = &mut weights[k.index()][l][i];
                        for c in 0..3 {
                            w[c] += g * trap * o[c];
                        }
                    }
                }
            }
        }
        Ok(GatePhaseModel {
            hamiltonian: *h,
            sequence: *seq,
            steps_per_segment: m,
            step,
            gamma_a,
            weights,
        })
    }

    pub fn for_noise_step(h: &PairHamiltonian, seq: &PulseSequence, dt: f64) -> Result<Self> {
        let m = (seq.period / dt - 1e-9).ceil().max(2.0) as usize;
        GatePhaseModel::new(h, seq, m)
    }

    pub fn steps_per_segment(&self) -> usize {
        self.steps_per_segment
    }

    pub fn gamma_a(&self, k: PairLevel) -> f64 {
        self.gamma_a[k.index()]
    }

    pub fn raw_phases(&self) -> [f64; 4] {
        self.gamma_a
    }

    pub fn corrected_phases(&self) -> [f64; 4] {
        local_frame_correction(&self.gamma_a)
    }

    pub fn conditional_phase(&self) -> f64 {
        conditional_phase(&self.gamma_a)
    }

    pub fn check_noise(&self, noise: &NoisePath) -> Result<()> {
        self.hamiltonian
            .noise_coupling
            .check_noise_dimension(noise.dimension())?;
        if noise.duration() < self.sequence.end() * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "noise path covers {} s but the pulse sequence ends at {} s",
                noise.duration(),
                self.sequence.end()
            )));
        }
        Ok(())
    }

    /// Stochastic phase increments of level `k` per segment.
    pub fn segment_gamma_s(&self, k: PairLevel, noise: &NoisePath) -> Result<[f64; 4]> {
        self.check_noise(noise)?;
        let axis = self.hamiltonian.noise_coupling.axis();
        let mut out = [0.0; 4];
        for (l, slot) in out.iter_mut().enumerate() {
            let t0 = self.sequence.window(l).0;
            let terms: Vec<f64> = self.weights[k.index()][l]
                .iter()
                .enumerate()
                .map(|(i, w)| dot3(w, &noise.field(t0 + i as f64 * self.step, &axis)))
                .collect();
            *slot = pairwise_sum(&terms);
        }
        Ok(out)
    }

    pub fn gamma_s(&self, k: PairLevel, noise: &NoisePath) -> Result<f64> {
        Ok(self.segment_gamma_s(k, noise)?.iter().sum())
    }
}

/// Raw adiabatic phases of pair level `k` through the sequence.
pub fn gate_phases(
    seq: &PulseSequence,
    h: &PairHamiltonian,
    noise: &NoisePath,
    k: PairLevel,
    limits: &AdiabaticLimits,
) -> Result<PhaseRecord> {
    let report = check_adiabaticity(
        h.min_gap(),
        seq.period,
        noise.spec().correlation_time,
        limits,
    );
    let warning = enforce_adiabaticity(report, limits)?;
    let model = GatePhaseModel::for_noise_step(h, seq, noise.dt())?;
    model.check_noise(noise)?;
    Ok(PhaseRecord {
        level_index: k.index(),
        gamma_a: model.gamma_a(k),
        gamma_s: model.gamma_s(k, noise)?,
        realization_seed: noise.seed(),
        adiabaticity_warning: warning,
    })
}

/// `Σ_l I^l_kj` for pair levels `k ≠ j`, each segment integral converged under
/// grid doubling.
pub fn gate_overlap_sum(
    h: &PairHamiltonian,
    seq: &PulseSequence,
    kernel: Kernel,
    correlation_time: f64,
    k: PairLevel,
    j: PairLevel,
) -> Result<f64> {
    if k == j {
        return Err(Error::invalid("overlap integral needs distinct levels"));
    }
    let (pk, pj) = (level_path(k), level_path(j));
    let mut total = 0.0;
    for (l, seg) in seq.segments.iter().enumerate() {
        let eval = |m: usize| -> Result<f64> {
            let times = uniform_grid(0.0, seq.period, m);
            let mut profile = vec![[0.0; 3]; m + 1];
            for (level, sign) in [(pk[l], 1.0), (pj[l], -1.0)] {
                for q in Qubit::BOTH {
                    let frame = eigenframe(&h.qubit_hamiltonian(level, q, seg.direction)?, &times)?;
                    let lv = Level::from_bit(level.bit(q));
                    for (i, p) in profile.iter_mut().enumerate() {
                        let o = h.noise_coupling.project(&frame.bloch(lv, i));
                        for c in 0..3 {
                            p[c] += sign * o[c];
                        }
                    }
                }
            }
            match kernel {
                Kernel::Exponential => Ok(exponential_overlap(
                    &profile,
                    seq.period / m as f64,
                    correlation_time,
                )),
            }
        };
        let mut m = 64;
        let mut prev = eval(m)?;
        loop {
            m *= 2;
            let next = eval(m)?;
            if (next - prev).abs() <= crate::ensemble::OVERLAP_TOLERANCE * next.abs()
                || next == prev
            {
                total += next;
                break;
            }
            if m > 1 << 22 {
                return Err(Error::Resolution {
                    what: "gate overlap grid".into(),
                    value: m as f64,
                    bound: (1u64 << 22) as f64,
                });
            }
            prev = next;
        }
    }
    Ok(total)
}

/// `(2η/π²)(γ²/Δω)(P̄/V) τc T sin²θ₀`
pub fn gate_onset_ratio(
    eta: f64,
    coupling: f64,
    bandwidth: f64,
    power_density: f64,
    correlation_time: f64,
    period: f64,
    sin2_theta: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    for (name, x) in [
        ("cycle count", eta),
        ("coupling", coupling),
        ("power density", power_density),
        ("correlation time", correlation_time),
        ("period", period),
    ] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::invalid(format!("{name} must be >= 0, got {x}")));
        }
    }
    if !(0.0..=1.0).contains(&sin2_theta) {
        return Err(Error::invalid(format!(
            "sin²θ₀ must lie in [0, 1], got {sin2_theta}"
        )));
    }
    Ok(2.0 * eta / (PI * PI) * coupling * coupling / bandwidth
        * power_density
        * correlation_time
        * period
        * sin2_theta)
}

/// `(|00⟩ + |11⟩)/√2`
pub fn bell_state() -> [C64; 4] {
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [a, ZERO, ZERO, a]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub realizations: usize,
    pub master_seed: u64,
    pub hamiltonian: PairHamiltonian,
    pub sequence: PulseSequence,
    pub noise: NoiseSpec,
    pub initial_state: [C64; 4],
    pub noise_dt: Option<f64>,
    pub limits: AdiabaticLimits,
    pub max_records: u64,
}

impl GateConfig {
    pub fn new(hamiltonian: PairHamiltonian, noise: NoiseSpec) -> Self {
        GateConfig {
            realizations: crate::ensemble::DEFAULT_REALIZATIONS,
            master_seed: 0,
            sequence: PulseSequence::standard(hamiltonian.schedule.period),
            hamiltonian,
            noise,
            initial_state: bell_state(),
            noise_dt: None,
            limits: AdiabaticLimits::default(),
            max_records: DEFAULT_MAX_RECORDS,
        }
    }

    pub fn noise_step(&self) -> f64 {
        self.noise_dt.unwrap_or_else(|| {
            self.sequence.period / (self.sequence.period / self.noise.max_step() - 1e-9).ceil()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        self.sequence.validate()?;
        self.noise.validate()?;
        self.hamiltonian
            .noise_coupling
            .check_noise_dimension(self.noise.dimension)?;
        if self.realizations < 2 {
            return Err(Error::invalid("an ensemble needs at least 2 realizations"));
        }
        let records = 4 * self.realizations as u64;
        if records > self.max_records {
            return Err(Error::Resource {
                what: "phase records".into(),
                requested: records,
                limit: self.max_records,
            });
        }
        let bell = bell_state();
        if self
            .initial_state
            .iter()
            .zip(&bell)
            .any(|(a, b)| (a - b).norm() > 1e-12)
        {
            return Err(Error::invalid(
                "the Bell gate run takes (|00⟩ + |11⟩)/√2; use run_ensemble for other states",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GateResult {
    /// Realized `φ` after the local frame correction.
    pub conditional_phase: f64,
    /// `⟨ψ₀|ρ̄|ψ₀⟩` with its standard error.
    pub fidelity: Estimate,
    /// `½ + ½ cos Γ_a(k,j) D̄` with the analytic `D̄`.
    pub fidelity_closed_form: f64,
    /// Analytic `D̄(00,11)`.
    pub decoherence_factor: f64,
    /// Monte Carlo `D̄(00,11)`.
    pub mc_factor: ComplexEstimate,
    /// `Σ_l I^l` for the Bell pair.
    pub overlap_sum: f64,
    pub analytic_variance: f64,
    /// `v / 4π²`
    pub onset_ratio: f64,
    pub density: AveragedDensity,
    /// Four records per realization, ordered by realization then pair level.
    pub records: Vec<PhaseRecord>,
}

/// Averaged Bell-state gate fidelity. Phases include the local frame correction.
pub fn bell_gate_run(config: &GateConfig) -> Result<GateResult> {
    config.validate()?;
    let h = &config.hamiltonian;
    let seq = &config.sequence;
    let dt = config.noise_step();
    let report = check_adiabaticity(
        h.min_gap(),
        seq.period,
        config.noise.correlation_time,
        &config.limits,
    );
    if !report.satisfied {
        return Err(Error::Adiabaticity(report.describe(&config.limits)));
    }
    let model = GatePhaseModel::for_noise_step(h, seq, dt)?;
    let corrected = model.corrected_phases();
    let (k, j) = (PairLevel::new(0, 0)?, PairLevel::new(1, 1)?);
    let ga_kj = corrected[k.index()] - corrected[j.index()];
    let psi0 = config.initial_state;

    let per: Vec<Result<([f64; 4], u64)>> = ordered_map(config.realizations, |i| {
        let seed = split_seed(config.master_seed, i as u64);
        let noise = make_noise_path(&config.noise, seq.end(), dt, seed)?;
        let mut gs = [0.0; 4];
        for l in PairLevel::ALL {
            gs[l.index()] = model.gamma_s(l, &noise)?;
        }
        Ok((gs, seed))
    });

    let mut amplitudes = Vec::with_capacity(config.realizations);
    let mut fidelities = Vec::with_capacity(config.realizations);
    let mut factors = Vec::with_capacity(config.realizations);
    let mut records = Vec::with_capacity(4 * config.realizations);
    for r in per {
        let (gs, seed) = r?;
        let amps: Vec<C64> = (0..4)
            .map(|i| psi0[i] * C64::from_polar(1.0, -(corrected[i] + gs[i])))
            .collect();
        let overlap: C64 = (0..4).map(|i| psi0[i].conj() * amps[i]).sum();
        fidelities.push(overlap.norm_sqr());
        factors.push(C64::from_polar(1.0, -(gs[k.index()] - gs[j.index()])));
        amplitudes.push(amps);
        for l in PairLevel::ALL {
            records.push(PhaseRecord {
                level_index: l.index(),
                gamma_a: model.gamma_a(l),
                gamma_s: gs[l.index()],
                realization_seed: seed,
                adiabaticity_warning: None,
            });
        }
    }
    let density = AveragedDensity::from_amplitudes(4, &amplitudes)?;
    let mut fidelity = Estimate::from_samples(&fidelities);
    fidelity.mean = density.expectation(&psi0)?;

    let overlap_sum = gate_overlap_sum(
        h,
        seq,
        config.noise.kernel,
        config.noise.correlation_time,
        k,
        j,
    )?;
    let v =
        crate::ensemble::variance_analytic(1.0, h.coupling, config.noise.variance, overlap_sum)?;
    let d = decoherence_factor_analytic(v)?;
    Ok(GateResult {
        conditional_phase: -corrected[j.index()],
        fidelity,
        fidelity_closed_form: 0.5 + 0.5 * ga_kj.cos() * d,
        decoherence_factor: d,
        mc_factor: ComplexEstimate::from_samples(&factors),
        overlap_sum,
        analytic_variance: v,
        onset_ratio: v / (4.0 * PI * PI),
        density,
        records,
    })
}

/// Ideal flip `|E₀⟩⟨E₁| + |E₁⟩⟨E₀|` in the eigenbasis of the field at `t = 0`.
pub fn eigenbasis_flip(cone_angle: f64) -> Mat2 {
    let e0 = level_state(Level::Lower, cone_angle, 0.0);
    let e1 = level_state(Level::Upper, cone_angle, 0.0);
    let mut m = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c] = e0[r] * e1[c].conj() + e1[r] * e0[c].conj();
        }
    }
    Mat2(m)
}

/// Exact two-qubit propagation through the sequence for a level-independent
/// field (no interaction, so the propagator factorizes per segment).
/// `psi0` and the result are amplitudes on the pair eigenbasis at `t = 0`.
pub fn evolve_pair_exact(
    h: &PairHamiltonian,
    seq: &PulseSequence,
    noise: Option<&NoisePath>,
    psi0: &[C64; 4],
    slices_per_segment: usize,
) -> Result<[C64; 4]> {
    seq.validate()?;
    if !h.is_uniform() {
        return Err(Error::invalid(
            "exact pair propagation needs level-independent fields",
        ));
    }
    if let Some(noise) = noise {
        if noise.duration() < seq.end() * (1.0 - 1e-12) {
            return Err(Error::invalid("noise path shorter than the pulse sequence"));
        }
    }
    let theta = h.level_cone_angles[0][0];
    let e0 = level_state(Level::Lower, theta, 0.0);
    let e1 = level_state(Level::Upper, theta, 0.0);
    let basis = [e0, e1];
    // eigen amplitudes → computational amplitudes
    let mut psi = [ZERO; 4];
    for a in 0..2 {
        for b in 0..2 {
            for r in 0..2 {
                for s in 0..2 {
                    psi[2 * r + s] += psi0[2 * a + b] * basis[a][r] * basis[b][s];
                }
            }
        }
    }
    let flip = eigenbasis_flip(theta);
    let level = PairLevel::new(0, 0)?;
    for (l, seg) in seq.segments.iter().enumerate() {
        let qh = h.qubit_hamiltonian(level, Qubit::First, seg.direction)?;
        let window = match noise {
            Some(n) => Some(n.window(seq.window(l).0, seq.period)?),
            None => None,
        };
        let u = propagator_exact(&qh, window.as_ref(), slices_per_segment)?;
        psi = Mat2::kron_apply(&u, &u, &psi);
        psi = match seg.pi_pulse_target {
            Qubit::First => Mat2::kron_apply(&flip, &Mat2::IDENTITY, &psi),
            Qubit::Second => Mat2::kron_apply(&Mat2::IDENTITY, &flip, &psi),
        };
    }
    let mut out = [ZERO; 4];
    for a in 0..2 {
        for b in 0..2 {
            for r in 0..2 {
                for s in 0..2 {
                    out[2 * a + b] += basis[a][r].conj() * basis[b][s].conj() * psi[2 * r + s];
                }
            }
        }
    }
    Ok(out)
}
