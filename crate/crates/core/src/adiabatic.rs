//! Precessing control fields, single-qubit Hamiltonians and their adiabatic
//! bookkeeping.
//!
//! Units: ħ = 1, energies are angular frequencies. The noiseless Hamiltonian is
//! `H_a(t) = -(γ/2) B_a(t)·σ` and noise couples linearly as
//! `H_s(t) = -(γ/2) B_n(t)·Ô`.
//!
//! Level labels follow the computational basis: [`Level::Lower`] is `|0⟩ = |E−⟩`
//! (spin along the field, energy `-γ|B|/2`), [`Level::Upper`] is `|1⟩ = |E+⟩`.
//! Eigenstates use the spherical gauge
//! `|E−⟩ = (cos θ/2, e^{iφ} sin θ/2)`, `|E+⟩ = (-e^{-iφ} sin θ/2, cos θ/2)`,
//! which is single valued around any loop that avoids the south pole.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bloch_vector, dot3, inner, Mat2, Spinor, C64, ZERO};
use crate::noise::NoisePath;

/// Absolute level gap below which two levels count as crossing.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;
/// Tolerance on `‖ψ0‖ = 1` for propagation inputs.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Contour C: azimuth increasing.
    #[default]
    Forward,
    /// Time-reversed contour C̄.
    Reversed,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reversed => -1.0,
        }
    }
}

/// Field of constant magnitude precessing about z on a cone of half-angle θ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub magnitude: f64,
    pub cone_angle: f64,
    pub period: f64,
    pub cycles: u32,
    #[serde(default)]
    pub direction: Direction,
}

impl ControlSchedule {
    pub fn new(magnitude: f64, cone_angle: f64, period: f64, cycles: u32) -> Result<Self> {
        let s = ControlSchedule {
            magnitude,
            cone_angle,
            period,
            cycles,
            direction: Direction::Forward,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn reversed(mut self) -> Self {
        self.direction = match self.direction {
            Direction::Forward => Direction::Reversed,
            Direction::Reversed => Direction::Forward,
        };
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid(format!(
                "period must be > 0, got {}",
                self.period
            )));
        }
        if !(0.0..=PI).contains(&self.cone_angle) {
            return Err(Error::invalid(format!(
                "cone angle must lie in [0, π], got {}",
                self.cone_angle
            )));
        }
        if self.cycles < 1 {
            return Err(Error::invalid("at least one cycle is required"));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::invalid(format!(
                "field magnitude must be >= 0, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.cycles as f64 * self.period
    }

    pub fn azimuth_rate(&self) -> f64 {
        self.direction.sign() * TAU / self.period
    }

    pub fn azimuth(&self, t: f64) -> f64 {
        self.azimuth_rate() * t
    }

    pub fn unit_direction(&self, t: f64) -> [f64; 3] {
        let (sp, cp) = self.azimuth(t).sin_cos();
        let (st, ct) = self.cone_angle.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn field(&self, t: f64) -> [f64; 3] {
        let n = self.unit_direction(t);
        [
            self.magnitude * n[0],
            self.magnitude * n[1],
            self.magnitude * n[2],
        ]
    }
}

/// The vector operator Ô of `H_s = -(γ/2) B_n·Ô`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCoupling {
    /// `Ô = â (â·σ)`: only the noise component along `â` couples, through `â·σ`.
    /// A scalar noise path is laid along `â`.
    Axis([f64; 3]),
    /// `Ô = σ`; requires three-component noise.
    Isotropic,
}

impl NoiseCoupling {
    pub fn rf_x() -> Self {
        NoiseCoupling::Axis([1.0, 0.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseCoupling::Axis(a) = self {
            let n = dot3(a, a).sqrt();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "noise axis must be a unit vector, has norm {n}"
                )));
            }
        }
        Ok(())
    }

    /// Where a scalar noise sample is laid in space.
    pub fn axis(&self) -> [f64; 3] {
        match self {
            NoiseCoupling::Axis(a) => *a,
            NoiseCoupling::Isotropic => [0.0, 0.0, 0.0],
        }
    }

    /// `⟨ψ|Ô|ψ⟩` given the Bloch vector `⟨σ⟩` of `ψ`.
    pub fn project(&self, bloch: &[f64; 3]) -> [f64; 3] {
        match self {
            NoiseCoupling::Axis(a) => {
                let s = dot3(a, bloch);
                [a[0] * s, a[1] * s, a[2] * s]
            }
            NoiseCoupling::Isotropic => *bloch,
        }
    }

    /// Smallest noise dimension this coupling accepts.
    pub fn noise_dimension(&self) -> usize {
        match self {
            NoiseCoupling::Axis(_) => 1,
            NoiseCoupling::Isotropic => 3,
        }
    }

    pub fn check_noise_dimension(&self, dimension: usize) -> Result<()> {
        match (self, dimension) {
            (NoiseCoupling::Isotropic, 1) => Err(Error::invalid(
                "isotropic coupling needs three-component noise",
            )),
            _ => Ok(()),
        }
    }

    /// `Ô`-projected noise field entering `H_s`.
    pub fn noise_field(&self, noise: &NoisePath, t: f64) -> [f64; 3] {
        let b = noise.field(t, &self.axis());
        match self {
            NoiseCoupling::Axis(a) => {
                let s = dot3(a, &b);
                [a[0] * s, a[1] * s, a[2] * s]
            }
            NoiseCoupling::Isotropic => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitHamiltonian {
    /// γ
    pub coupling: f64,
    pub schedule: ControlSchedule,
    pub noise_coupling: NoiseCoupling,
}

impl QubitHamiltonian {
    pub fn new(
        coupling: f64,
        schedule: ControlSchedule,
        noise_coupling: NoiseCoupling,
    ) -> Result<Self> {
        let h = QubitHamiltonian {
            coupling,
            schedule,
            noise_coupling,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::invalid(format!(
                "coupling must be > 0, got {}",
                self.coupling
            )));
        }
        self.schedule.validate()?;
        self.noise_coupling.validate()
    }

    pub fn duration(&self) -> f64 {
        self.schedule.duration()
    }

    /// Level splitting Δ = γ|B_a|.
    pub fn gap(&self) -> f64 {
        self.coupling * self.schedule.magnitude
    }

    /// `b` such that `H(t) = b·σ`.
    pub fn bloch_hamiltonian(&self, t: f64, noise: Option<&NoisePath>) -> [f64; 3] {
        let mut b = self.schedule.field(t);
        if let Some(noise) = noise {
            let n = noise.field(t, &self.noise_coupling.axis());
            match self.noise_coupling {
                NoiseCoupling::Axis(a) => {
                    // only the component along â couples
                    let s = dot3(&a, &n);
                    for c in 0..3 {
                        b[c] += a[c] * s;
                    }
                }
                NoiseCoupling::Isotropic => {
                    for c in 0..3 {
                        b[c] += n[c];
                    }
                }
            }
        }
        let g = -0.5 * self.coupling;
        [g * b[0], g * b[1], g * b[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// |0⟩ = |E−⟩, aligned with the field.
    Lower,
    /// |1⟩ = |E+⟩, anti-aligned.
    Upper,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Lower, Level::Upper];

    pub fn index(self) -> usize {
        match self {
            Level::Lower => 0,
            Level::Upper => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Level {
        if bit == 0 {
            Level::Lower
        } else {
            Level::Upper
        }
    }

    pub fn flipped(self) -> Level {
        match self {
            Level::Lower => Level::Upper,
            Level::Upper => Level::Lower,
        }
    }

    /// Sign of the energy `±γ|B|/2`.
    pub fn energy_sign(self) -> f64 {
        match self {
            Level::Lower => -1.0,
            Level::Upper => 1.0,
        }
    }

    /// ⟨σ⟩ = this sign times the field direction.
    pub fn bloch_sign(self) -> f64 {
        -self.energy_sign()
    }
}

/// Eigenstate of `n̂(θ, φ)·σ` in the spherical gauge.
pub fn level_state(level: Level, polar: f64, azimuth: f64) -> Spinor {
    let (s, c) = (0.5 * polar).sin_cos();
    match level {
        Level::Lower => [C64::new(c, 0.0), C64::from_polar(s, azimuth)],
        Level::Upper => [-C64::from_polar(s, -azimuth), C64::new(c, 0.0)],
    }
}

/// Closed-form loop Berry phase `∮ i⟨E|dE⟩` of one forward cycle: `∓π(1 − cos θ)`
/// for the lower / upper level.
pub fn solid_angle_phase(level: Level, cone_angle: f64) -> f64 {
    -level.bloch_sign() * PI * (1.0 - cone_angle.cos())
}

/// `n + 1` uniformly spaced times over `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let h = (t1 - t0) / steps as f64;
    (0..=steps).map(|i| t0 + i as f64 * h).collect()
}

fn grid_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::invalid("time grid needs at least 3 points"));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::invalid(format!(
                "time grid is not uniform near index {i}"
            )));
        }
    }
    Ok(h)
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Instantaneous spectrum of the noiseless Hamiltonian on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFrame {
    times: Vec<f64>,
    step: f64,
    /// Continuous (unwrapped) azimuth of the field direction.
    azimuth: Vec<f64>,
    energies: [Vec<f64>; 2],
    states: Vec<[Spinor; 2]>,
    /// γ̇_l = i⟨E_l|Ė_l⟩
    berry_connection: [Vec<f64>; 2],
    min_gap: f64,
    min_gap_time: f64,
}

/// Builds the gauge-smooth eigenframe of `h` on `times`.
pub fn eigenframe(h: &QubitHamiltonian, times: &[f64]) -> Result<EigenFrame> {
    h.validate()?;
    let step = grid_step(times)?;
    let gap = h.gap();
    if gap < DEGENERACY_TOLERANCE {
        return Err(Error::Degeneracy {
            time: times[0],
            gap,
            tolerance: DEGENERACY_TOLERANCE,
        });
    }

    let mut azimuth = Vec::with_capacity(times.len());
    let mut prev: Option<f64> = None;
    for &t in times {
        let n = h.schedule.unit_direction(t);
        let raw = n[1].atan2(n[0]);
        let phi = match prev {
            None => raw,
            Some(p) => p + (raw - p + PI).rem_euclid(TAU) - PI,
        };
        azimuth.push(phi);
        prev = Some(phi);
    }

    let polar = h.schedule.cone_angle;
    let half_gap = 0.5 * gap;
    let s2 = (0.5 * polar).sin().powi(2);
    let rate = h.schedule.azimuth_rate();
    let n = times.len();
    let states = azimuth
        .iter()
        .map(|&phi| {
            [
                level_state(Level::Lower, polar, phi),
                level_state(Level::Upper, polar, phi),
            ]
        })
        .collect();

    Ok(EigenFrame {
        times: times.to_vec(),
        step,
        azimuth,
        energies: [vec![-half_gap; n], vec![half_gap; n]],
        states,
        berry_connection: [vec![-s2 * rate; n], vec![s2 * rate; n]],
        min_gap: gap,
        min_gap_time: times[0],
    })
}

impl EigenFrame {
    /// Frame from arbitrary (smoothly gauged) states, with the Berry connection
    /// taken from central finite differences of the states.
    pub fn from_states(
        times: Vec<f64>,
        energies: [Vec<f64>; 2],
        states: Vec<[Spinor; 2]>,
    ) -> Result<Self> {
        let step = grid_step(&times)?;
        let n = times.len();
        if states.len() != n || energies.iter().any(|e| e.len() != n) {
            return Err(Error::invalid(
                "states and energies must match the time grid",
            ));
        }
        let (mut min_gap, mut min_gap_time) = (f64::INFINITY, times[0]);
        for i in 0..n {
            let g = (energies[1][i] - energies[0][i]).abs();
            if g < min_gap {
                min_gap = g;
                min_gap_time = times[i];
            }
        }
        if min_gap < DEGENERACY_TOLERANCE {
            return Err(Error::Degeneracy {
                time: min_gap_time,
                gap: min_gap,
                tolerance: DEGENERACY_TOLERANCE,
            });
        }
        let mut berry_connection = [vec![0.0; n], vec![0.0; n]];
        for (l, conn) in berry_connection.iter_mut().enumerate() {
            for i in 0..n {
                let d: Spinor = if i == 0 {
                    diff3(&states[0][l], &states[1][l], &states[2][l], step, false)
                } else if i == n - 1 {
                    diff3(
                        &states[n - 1][l],
                        &states[n - 2][l],
                        &states[n - 3][l],
                        step,
                        true,
                    )
                } else {
                    let (a, b) = (&states[i - 1][l], &states[i + 1][l]);
                    [(b[0] - a[0]) / (2.0 * step), (b[1] - a[1]) / (2.0 * step)]
                };
                conn[i] = -inner(&states[i][l], &d).im;
            }
        }
        let azimuth = states
            .iter()
            .map(|s| {
                let b = bloch_vector(&s[0]);
                b[1].atan2(b[0])
            })
            .collect();
        Ok(EigenFrame {
            times,
            step,
            azimuth,
            energies,
            states,
            berry_connection,
            min_gap,
            min_gap_time,
        })
    }

    /// Multiplies every state by `exp(iα(t))` and recomputes the connection
    /// numerically.
    pub fn regauge(&self, alpha: impl Fn(f64) -> f64) -> Result<Self> {
        let states = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| {
                let p = C64::from_polar(1.0, alpha(t));
                [[s[0][0] * p, s[0][1] * p], [s[1][0] * p, s[1][1] * p]]
            })
            .collect();
        EigenFrame::from_states(self.times.clone(), self.energies.clone(), states)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energies(&self, level: Level) -> &[f64] {
        &self.energies[level.index()]
    }

    pub fn berry_connection(&self, level: Level) -> &[f64] {
        &self.berry_connection[level.index()]
    }

    pub fn azimuth(&self) -> &[f64] {
        &self.azimuth
    }

    pub fn state(&self, level: Level, i: usize) -> &Spinor {
        &self.states[i][level.index()]
    }

    pub fn min_gap(&self) -> (f64, f64) {
        (self.min_gap, self.min_gap_time)
    }

    pub fn bloch(&self, level: Level, i: usize) -> [f64; 3] {
        bloch_vector(self.state(level, i))
    }

    /// Largest deviation of the state Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| {
                let a = (inner(&s[0], &s[0]).re - 1.0).abs();
                let b = (inner(&s[1], &s[1]).re - 1.0).abs();
                let c = inner(&s[0], &s[1]).norm();
                a.max(b).max(c)
            })
            .fold(0.0, f64::max)
    }

    /// `∫ γ̇_l dt` over the frame.
    pub fn berry_phase(&self, level: Level) -> f64 {
        trapezoid(self.berry_connection(level), self.step)
    }

    /// `∫ E_l dt` over the frame.
    pub fn dynamical_phase(&self, level: Level) -> f64 {
        trapezoid(self.energies(level), self.step)
    }

    /// Deterministic phase `Γ_a(l) = ∫ (E_l − γ̇_l) dt`.
    pub fn deterministic_phase(&self, level: Level) -> f64 {
        self.dynamical_phase(level) - self.berry_phase(level)
    }

    /// Non-adiabatic coupling `⟨E_l|Ė_m⟩` at sample `i` (finite differences).
    pub fn nonadiabatic_coupling(&self, l: Level, m: Level, i: usize) -> C64 {
        let n = self.len();
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let (a, b) = (self.state(m, lo), self.state(m, hi));
        let dt = (hi - lo) as f64 * self.step;
        let d = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt];
        inner(self.state(l, i), &d)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "t_s,e_lower_rad_s,e_upper_rad_s,berry_lower_rad_s,berry_upper_rad_s"
        )?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i],
                self.energies[0][i],
                self.energies[1][i],
                self.berry_connection[0][i],
                self.berry_connection[1][i]
            )?;
        }
        Ok(())
    }
}

/// Second-order one-sided difference from three equally spaced points.
fn diff3(x0: &Spinor, x1: &Spinor, x2: &Spinor, h: f64, backward: bool) -> Spinor {
    let s = if backward { -1.0 } else { 1.0 };
    [
        (x0[0] * -1.5 + x1[0] * 2.0 - x2[0] * 0.5) * (s / h),
        (x0[1] * -1.5 + x1[1] * 2.0 - x2[1] * 0.5) * (s / h),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticLimits {
    /// Upper bound on ħ/(TΔ).
    pub max_period_ratio: f64,
    /// Upper bound on ħ/(τcΔ).
    pub max_noise_ratio: f64,
    /// Violations are errors rather than warnings.
    pub strict: bool,
}

impl Default for AdiabaticLimits {
    fn default() -> Self {
        AdiabaticLimits {
            max_period_ratio: 0.1,
            max_noise_ratio: 0.1,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    pub period_ratio: f64,
    pub noise_ratio: f64,
    pub satisfied: bool,
}

impl AdiabaticityReport {
    pub fn describe(&self, limits: &AdiabaticLimits) -> String {
        format!(
            "1/(TΔ) = {:.3e} (limit {:.3e}), 1/(τcΔ) = {:.3e} (limit {:.3e})",
            self.period_ratio, limits.max_period_ratio, self.noise_ratio, limits.max_noise_ratio
        )
    }
}

pub fn check_adiabaticity(
    gap: f64,
    period: f64,
    correlation_time: f64,
    limits: &AdiabaticLimits,
) -> AdiabaticityReport {
    let period_ratio = 1.0 / (period * gap);
    let noise_ratio = 1.0 / (correlation_time * gap);
    AdiabaticityReport {
        period_ratio,
        noise_ratio,
        satisfied: period_ratio <= limits.max_period_ratio && noise_ratio <= limits.max_noise_ratio,
    }
}

/// Applies the limits: `Ok(None)` if satisfied, `Ok(Some(report))` as a warning,
/// or an error in strict mode.
pub fn enforce_adiabaticity(
    report: AdiabaticityReport,
    limits: &AdiabaticLimits,
) -> Result<Option<AdiabaticityReport>> {
    if report.satisfied {
        Ok(None)
    } else if limits.strict {
        Err(Error::Adiabaticity(report.describe(limits)))
    } else {
        Ok(Some(report))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRecord {
    /// Level index: 0/1 for one qubit, `2 i₁ + i₂` for a pair.
    pub level_index: usize,
    /// Γ_a(k), radians.
    pub gamma_a: f64,
    /// Γ_s(k), radians.
    pub gamma_s: f64,
    pub realization_seed: u64,
    /// Present when the adiabaticity limits were exceeded in non-strict mode.
    pub adiabaticity_warning: Option<AdiabaticityReport>,
}

/// Γ_a and the linear functional `B_n ↦ Γ_s` for each level, on a uniform
/// quadrature grid over the schedule.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    hamiltonian: QubitHamiltonian,
    steps: usize,
    step: f64,
    gamma_a: [f64; 2],
    /// `Γ_s(l) = Σ_n weights[l][n] · B_n(t_n)` with trapezoid weights folded in.
    weights: [Vec<[f64; 3]>; 2],
}

impl PhaseModel {
    pub fn new(h: &QubitHamiltonian, steps: usize) -> Result<Self> {
        let steps = steps.max(2);
        let times = uniform_grid(0.0, h.duration(), steps);
        let frame = eigenframe(h, &times)?;
        let step = frame.step();
        let g = -0.5 * h.coupling;
        let mut weights = [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)];
        for level in Level::ALL {
            for i in 0..=steps {
                let trap = if i == 0 || i == steps {
                    0.5 * step
                } else {
                    step
                };
                let o = h.noise_coupling.project(&frame.bloch(level, i));
                weights[level.index()].push([g * trap * o[0], g * trap * o[1], g * trap * o[2]]);
            }
        }
        Ok(PhaseModel {
            hamiltonian: *h,
            steps,
            step,
            gamma_a: [
                frame.deterministic_phase(Level::Lower),
                frame.deterministic_phase(Level::Upper),
            ],
            weights,
        })
    }

    /// Quadrature grid matched to a noise step.
    pub fn for_noise_step(h: &QubitHamiltonian, dt: f64) -> Result<Self> {
        let steps = (h.duration() / dt - 1e-9).ceil().max(2.0) as usize;
        PhaseModel::new(h, steps)
    }

    pub fn gamma_a(&self, level: Level) -> f64 {
        self.gamma_a[level.index()]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn weights(&self, level: Level) -> &[[f64; 3]] {
        &self.weights[level.index()]
    }

    pub fn gamma_s(&self, level: Level, noise: &NoisePath) -> Result<f64> {
        if noise.duration() < self.hamiltonian.duration() * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "noise path covers {} s but the schedule lasts {} s",
                noise.duration(),
                self.hamiltonian.duration()
            )));
        }
        let axis = self.hamiltonian.noise_coupling.axis();
        let w = &self.weights[level.index()];
        let terms: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(i, wi)| dot3(wi, &noise.field(i as f64 * self.step, &axis)))
            .collect();
        Ok(crate::mc::pairwise_sum(&terms))
    }
}

/// Analytic adiabatic phases of `level` along one noise realization.
pub fn adiabatic_phases(
    h: &QubitHamiltonian,
    noise: &NoisePath,
    level: Level,
    limits: &AdiabaticLimits,
) -> Result<PhaseRecord> {
    h.validate()?;
    h.noise_coupling.check_noise_dimension(noise.dimension())?;
    let report = check_adiabaticity(
        h.gap(),
        h.schedule.period,
        noise.spec().correlation_time,
        limits,
    );
    let warning = enforce_adiabaticity(report, limits)?;
    let model = PhaseModel::for_noise_step(h, noise.dt())?;
    Ok(PhaseRecord {
        level_index: level.index(),
        gamma_a: model.gamma_a(level),
        gamma_s: model.gamma_s(level, noise)?,
        realization_seed: noise.seed(),
        adiabaticity_warning: warning,
    })
}

fn check_slices(h: &QubitHamiltonian, noise: Option<&NoisePath>, slices: usize) -> Result<()> {
    if slices == 0 {
        return Err(Error::invalid("at least one slice is required"));
    }
    if let Some(noise) = noise {
        h.noise_coupling.check_noise_dimension(noise.dimension())?;
        if noise.duration() < h.duration() * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "noise path covers {} s but the schedule lasts {} s",
                noise.duration(),
                h.duration()
            )));
        }
        let needed = (h.duration() / noise.dt() - 1e-9).ceil();
        if (slices as f64) < needed {
            return Err(Error::Resolution {
                what: "slice width (must not exceed the noise step)".into(),
                value: h.duration() / slices as f64,
                bound: noise.dt(),
            });
        }
    }
    Ok(())
}

/// Exact time-ordered propagator over the schedule: product of closed-form
/// exponentials of the midpoint-sampled Hamiltonian.
pub fn propagator_exact(
    h: &QubitHamiltonian,
    noise: Option<&NoisePath>,
    slices: usize,
) -> Result<Mat2> {
    h.validate()?;
    check_slices(h, noise, slices)?;
    let eps = h.duration() / slices as f64;
    let mut u = Mat2::IDENTITY;
    for j in 0..slices {
        let t = (j as f64 + 0.5) * eps;
        u = Mat2::exp_su2(h.bloch_hamiltonian(t, noise), eps).mul(&u);
    }
    Ok(u)
}

/// `U(t_f, t_0) ψ0` without any adiabatic approximation.
pub fn evolve_exact(
    h: &QubitHamiltonian,
    noise: Option<&NoisePath>,
    psi0: &Spinor,
    slices: usize,
) -> Result<Spinor> {
    h.validate()?;
    let norm = (psi0[0].norm_sqr() + psi0[1].norm_sqr()).sqrt();
    if (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::invalid(format!("initial state has norm {norm}")));
    }
    check_slices(h, noise, slices)?;
    let eps = h.duration() / slices as f64;
    let mut psi = *psi0;
    for j in 0..slices {
        let t = (j as f64 + 0.5) * eps;
        psi = Mat2::exp_su2(h.bloch_hamiltonian(t, noise), eps).apply(&psi);
    }
    Ok(psi)
}

/// Amplitudes `⟨E_l(t)|ψ⟩` in the instantaneous eigenbasis of `h` at time `t`.
pub fn eigen_amplitudes(h: &QubitHamiltonian, t: f64, psi: &Spinor) -> [C64; 2] {
    let phi = h.schedule.azimuth(t);
    let theta = h.schedule.cone_angle;
    [
        inner(&level_state(Level::Lower, theta, phi), psi),
        inner(&level_state(Level::Upper, theta, phi), psi),
    ]
}

/// `Σ_l c_l |E_l(t)⟩`.
pub fn superpose(h: &QubitHamiltonian, t: f64, amplitudes: &[C64; 2]) -> Spinor {
    let phi = h.schedule.azimuth(t);
    let theta = h.schedule.cone_angle;
    let lo = level_state(Level::Lower, theta, phi);
    let up = level_state(Level::Upper, theta, phi);
    let mut out = [ZERO; 2];
    for c in 0..2 {
        out[c] = amplitudes[0] * lo[c] + amplitudes[1] * up[c];
    }
    out
}
