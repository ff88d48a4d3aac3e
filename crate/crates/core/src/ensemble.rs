//! Monte Carlo ensembles over noise realizations, the noise-averaged density
//! matrix and the closed-form decoherence predictions it is compared against.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    check_adiabaticity, eigen_amplitudes, eigenframe, evolve_exact, superpose, uniform_grid,
    AdiabaticLimits, EigenFrame, Level, NoiseCoupling, PhaseModel, PhaseRecord, QubitHamiltonian,
};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::mc::{ordered_map, pairwise_sum, split_seed, ComplexEstimate};
use crate::noise::{make_noise_path, Kernel, NoisePath, NoiseSpec};

pub const DEFAULT_REALIZATIONS: usize = 4096;
/// Bound on `levels × realizations` kept in memory by one ensemble.
pub const DEFAULT_MAX_RECORDS: u64 = 1 << 24;
/// Relative tolerance of [`overlap_integral_converged`].
pub const OVERLAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Time-sliced propagation of the full Hamiltonian.
    ExactPropagation,
    /// Adiabatic phases `Γ_a + Γ_s` applied to the initial amplitudes.
    #[default]
    AnalyticPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub master_seed: u64,
    pub hamiltonian: QubitHamiltonian,
    pub noise: NoiseSpec,
    /// Amplitudes `c_k` on the eigenstates at `t = 0`.
    pub initial_amplitudes: [C64; 2],
    pub engine: Engine,
    /// Noise sampling step; defaults to the largest step ≤ τc/10 dividing the duration.
    pub noise_dt: Option<f64>,
    /// Slices for the exact engine; defaults to [`default_slices`].
    pub slices: Option<usize>,
    pub limits: AdiabaticLimits,
    pub max_records: u64,
}

impl EnsembleConfig {
    pub fn new(
        hamiltonian: QubitHamiltonian,
        noise: NoiseSpec,
        initial_amplitudes: [C64; 2],
    ) -> Self {
        EnsembleConfig {
            realizations: DEFAULT_REALIZATIONS,
            master_seed: 0,
            hamiltonian,
            noise,
            initial_amplitudes,
            engine: Engine::default(),
            noise_dt: None,
            slices: None,
            limits: AdiabaticLimits::default(),
            max_records: DEFAULT_MAX_RECORDS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        self.noise.validate()?;
        self.hamiltonian
            .noise_coupling
            .check_noise_dimension(self.noise.dimension)?;
        let norm: f64 = self.initial_amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("Σ|c_k|² must be 1, got {norm}")));
        }
        if self.realizations < 2 {
            return Err(Error::invalid("an ensemble needs at least 2 realizations"));
        }
        let records = 2 * self.realizations as u64;
        if records > self.max_records {
            return Err(Error::Resource {
                what: "phase records".into(),
                requested: records,
                limit: self.max_records,
            });
        }
        Ok(())
    }

    pub fn noise_step(&self) -> f64 {
        self.noise_dt
            .unwrap_or_else(|| default_noise_step(&self.noise, self.hamiltonian.duration()))
    }

    pub fn slice_count(&self) -> usize {
        self.slices
            .unwrap_or_else(|| default_slices(&self.hamiltonian, self.noise_step()))
    }
}

/// Largest step not above τc/10 that divides `duration` evenly.
pub fn default_noise_step(spec: &NoiseSpec, duration: f64) -> f64 {
    duration / (duration / spec.max_step() - 1e-9).ceil().max(1.0)
}

/// At least one slice per noise step and twenty per radian of level splitting.
pub fn default_slices(h: &QubitHamiltonian, noise_dt: f64) -> usize {
    let noise = (h.duration() / noise_dt - 1e-9).ceil();
    let gap = (20.0 * h.gap() * h.duration()).ceil();
    noise.max(gap).max(1.0) as usize
}

/// Noise-averaged density matrix in the instantaneous eigenbasis at `t_f`,
/// row-major `dim × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDensity {
    dim: usize,
    matrix: Vec<C64>,
    standard_errors: Vec<f64>,
    realizations_used: usize,
}

impl AveragedDensity {
    /// Averages pure-state projectors `|a⟩⟨a|` given by their amplitudes.
    pub fn from_amplitudes(dim: usize, amplitudes: &[Vec<C64>]) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.iter().any(|a| a.len() != dim) {
            return Err(Error::invalid(
                "amplitude vectors must be non-empty and of equal dimension",
            ));
        }
        let mut matrix = vec![ZERO; dim * dim];
        let mut standard_errors = vec![0.0; dim * dim];
        let mut column = Vec::with_capacity(amplitudes.len());
        for k in 0..dim {
            for j in 0..dim {
                column.clear();
                column.extend(amplitudes.iter().map(|a| a[k] * a[j].conj()));
                let e = ComplexEstimate::from_samples(&column);
                matrix[k * dim + j] = e.mean;
                standard_errors[k * dim + j] = e.entry_error;
            }
        }
        Ok(AveragedDensity {
            dim,
            matrix,
            standard_errors,
            realizations_used: amplitudes.len(),
        })
    }

    /// A density with no sampling error.
    pub fn exact(dim: usize, matrix: Vec<C64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::invalid("matrix size does not match dimension"));
        }
        Ok(AveragedDensity {
            dim,
            matrix,
            standard_errors: vec![0.0; dim * dim],
            realizations_used: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, j: usize) -> C64 {
        self.matrix[k * self.dim + j]
    }

    pub fn standard_error(&self, k: usize, j: usize) -> f64 {
        self.standard_errors[k * self.dim + j]
    }

    pub fn realizations_used(&self) -> usize {
        self.realizations_used
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(k, j) - self.get(j, k).conj()).norm());
            }
        }
        worst
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation(&self, psi: &[C64]) -> Result<f64> {
        if psi.len() != self.dim {
            return Err(Error::invalid("state dimension does not match density"));
        }
        let mut acc = ZERO;
        for k in 0..self.dim {
            for j in 0..self.dim {
                acc += psi[k].conj() * self.get(k, j) * psi[j];
            }
        }
        Ok(acc.re)
    }

    /// Smallest eigenvalue, bounded below by the Gershgorin discs for `dim > 2`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 2 {
            let a = self.get(0, 0).re;
            let d = self.get(1, 1).re;
            let b = self.get(0, 1).norm();
            return 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt();
        }
        (0..self.dim)
            .map(|k| {
                let r: f64 = (0..self.dim)
                    .filter(|&j| j != k)
                    .map(|j| self.get(k, j).norm())
                    .sum();
                self.get(k, k).re - r
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub density: AveragedDensity,
    /// Two records per realization, ordered by realization then level.
    pub records: Vec<PhaseRecord>,
    pub noise_dt: f64,
    pub slices: Option<usize>,
}

impl EnsembleOutcome {
    /// `Γ_s(k) − Γ_s(j)` per realization.
    pub fn phase_differences(&self, k: Level, j: Level) -> Vec<f64> {
        self.records
            .chunks(2)
            .map(|r| r[k.index()].gamma_s - r[j.index()].gamma_s)
            .collect()
    }
}

/// Runs the ensemble; realization `i` uses noise seed `split_seed(master_seed, i)`.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleOutcome> {
    config.validate()?;
    let h = &config.hamiltonian;
    let dt = config.noise_step();
    let report = check_adiabaticity(
        h.gap(),
        h.schedule.period,
        config.noise.correlation_time,
        &config.limits,
    );
    let warning = if report.satisfied {
        None
    } else if config.engine == Engine::AnalyticPhase || config.limits.strict {
        return Err(Error::Adiabaticity(report.describe(&config.limits)));
    } else {
        Some(report)
    };
    let model = PhaseModel::for_noise_step(h, dt)?;
    let slices = match config.engine {
        Engine::ExactPropagation => Some(config.slice_count()),
        Engine::AnalyticPhase => None,
    };
    let c = config.initial_amplitudes;
    let psi0 = superpose(h, 0.0, &c);
    let tf = h.duration();

    let per: Vec<Result<(Vec<C64>, [f64; 2], u64)>> = ordered_map(config.realizations, |i| {
        let seed = split_seed(config.master_seed, i as u64);
        let noise = make_noise_path(&config.noise, tf, dt, seed)?;
        let gs = [
            model.gamma_s(Level::Lower, &noise)?,
            model.gamma_s(Level::Upper, &noise)?,
        ];
        let amps = match slices {
            Some(j) => {
                let psi = evolve_exact(h, Some(&noise), &psi0, j)?;
                eigen_amplitudes(h, tf, &psi).to_vec()
            }
            None => Level::ALL
                .iter()
                .map(|&l| c[l.index()] * C64::from_polar(1.0, -(model.gamma_a(l) + gs[l.index()])))
                .collect(),
        };
        Ok((amps, gs, seed))
    });

    let mut amplitudes = Vec::with_capacity(config.realizations);
    let mut records = Vec::with_capacity(2 * config.realizations);
    for r in per {
        let (amps, gs, seed) = r?;
        amplitudes.push(amps);
        for l in Level::ALL {
            records.push(PhaseRecord {
                level_index: l.index(),
                gamma_a: model.gamma_a(l),
                gamma_s: gs[l.index()],
                realization_seed: seed,
                adiabaticity_warning: warning,
            });
        }
    }
    Ok(EnsembleOutcome {
        density: AveragedDensity::from_amplitudes(2, &amplitudes)?,
        records,
        noise_dt: dt,
        slices,
    })
}

/// `exp(−v/2)`
pub fn decoherence_factor_analytic(variance: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(Error::invalid(format!(
            "variance must be >= 0, got {variance}"
        )));
    }
    Ok((-0.5 * variance).exp())
}

/// `η γ² σ² I / 4`
pub fn variance_analytic(eta: f64, coupling: f64, sigma2: f64, overlap: f64) -> Result<f64> {
    if !(eta >= 1.0) {
        return Err(Error::invalid(format!(
            "cycle count must be >= 1, got {eta}"
        )));
    }
    for (name, x) in [
        ("coupling", coupling),
        ("variance", sigma2),
        ("overlap", overlap),
    ] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::invalid(format!("{name} must be >= 0, got {x}")));
        }
    }
    Ok(eta * coupling * coupling * sigma2 * overlap / 4.0)
}

/// σ² implied by absorbed power density and bandwidth, `P̄/V = σ² Δω`.
pub fn variance_from_power(power_density: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    if !(power_density >= 0.0) {
        return Err(Error::invalid(format!(
            "power density must be >= 0, got {power_density}"
        )));
    }
    Ok(power_density / bandwidth)
}

/// `(η/16π²)(γ²/Δω)(P̄/V) I`; values ≥ 1 mean the phase spread has reached 2π.
pub fn onset_ratio(
    power_density: f64,
    bandwidth: f64,
    coupling: f64,
    eta: f64,
    overlap: f64,
) -> Result<f64> {
    variance_from_power(power_density, bandwidth)?;
    if !(overlap >= 0.0) {
        return Err(Error::invalid(format!(
            "overlap must be >= 0, got {overlap}"
        )));
    }
    Ok(eta / (16.0 * PI * PI) * coupling * coupling / bandwidth * power_density * overlap)
}

/// `sin²θ₀` of an rf field `B_rf` in a static field `B₀` seen from the rotating frame.
pub fn nmr_sin2_theta(b0: f64, b_rf: f64) -> Result<f64> {
    let d = b_rf * b_rf + (b0 - b_rf) * (b0 - b_rf);
    if !(d > 0.0) {
        return Err(Error::invalid("B_rf and B₀ − B_rf cannot both vanish"));
    }
    Ok(b_rf * b_rf / d)
}

/// `I_{+−} = 4 τc T sin²θ₀` for rf-amplitude noise, valid for τc ≪ T.
pub fn nmr_overlap(correlation_time: f64, period: f64, sin2_theta: f64) -> f64 {
    4.0 * correlation_time * period * sin2_theta
}

/// `(η γ² T / 4π²) sin²θ₀ (P̄/V)(τc/Δω)`.
pub fn nmr_onset_ratio(
    eta: f64,
    coupling: f64,
    period: f64,
    sin2_theta: f64,
    power_density: f64,
    correlation_time: f64,
    bandwidth: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    Ok(eta * coupling * coupling * period / (4.0 * PI * PI)
        * sin2_theta
        * power_density
        * correlation_time
        / bandwidth)
}

/// `Ô_kj(t) = ⟨E_k|Ô|E_k⟩ − ⟨E_j|Ô|E_j⟩` sampled on the frame grid.
pub fn overlap_profile(
    frame: &EigenFrame,
    coupling: &NoiseCoupling,
    k: Level,
    j: Level,
) -> Result<Vec<[f64; 3]>> {
    if k == j {
        return Err(Error::invalid("overlap integral needs distinct levels"));
    }
    Ok((0..frame.len())
        .map(|i| {
            let a = coupling.project(&frame.bloch(k, i));
            let b = coupling.project(&frame.bloch(j, i));
            [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
        })
        .collect())
}

/// `∬ O(t)·O(t') f(t − t') dt dt'` for the exponential kernel, with `O`
/// linear between samples on a uniform grid of step `h`. Linear time: the
/// inner integral `Y(t) = ∫₀ᵗ e^{−(t−s)/τc} O(s) ds` is advanced exactly.
pub fn exponential_overlap(profile: &[[f64; 3]], h: f64, correlation_time: f64) -> f64 {
    let tau = correlation_time;
    let e = (-h / tau).exp();
    // τ(1 − E) without cancellation for h ≪ τ
    let one_minus_e = -(-h / tau).exp_m1();
    let w1 = tau - tau * tau * one_minus_e / h;
    let w0 = tau * one_minus_e - w1;
    let n = profile.len();
    let mut y = [0.0; 3];
    let mut terms = Vec::with_capacity(n);
    terms.push(0.0);
    for i in 1..n {
        let (a, b) = (&profile[i - 1], &profile[i]);
        for c in 0..3 {
            y[c] = e * y[c] + w0 * a[c] + w1 * b[c];
        }
        let w = if i == n - 1 { 0.5 } else { 1.0 };
        terms.push(w * (b[0] * y[0] + b[1] * y[1] + b[2] * y[2]));
    }
    2.0 * h * pairwise_sum(&terms)
}

/// Direct trapezoid evaluation of the double integral for an arbitrary kernel.
/// Quadratic in the grid size; used as a reference.
pub fn overlap_quadrature(profile: &[[f64; 3]], h: f64, kernel: impl Fn(f64) -> f64) -> f64 {
    let n = profile.len();
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let (a, b) = (&profile[i], &profile[j]);
            acc += w(j)
                * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
                * kernel((i as f64 - j as f64) * h);
        }
        rows.push(w(i) * acc);
    }
    pairwise_sum(&rows)
}

/// `I_kj` over the span of `frame`.
pub fn overlap_integral(
    frame: &EigenFrame,
    coupling: &NoiseCoupling,
    kernel: Kernel,
    correlation_time: f64,
    k: Level,
    j: Level,
) -> Result<f64> {
    if !(correlation_time > 0.0) {
        return Err(Error::invalid("correlation time must be > 0"));
    }
    let profile = overlap_profile(frame, coupling, k, j)?;
    match kernel {
        Kernel::Exponential => Ok(exponential_overlap(
            &profile,
            frame.step(),
            correlation_time,
        )),
    }
}

/// `I_kj` over one period of `h`, refining the grid until two successive
/// doublings agree to [`OVERLAP_TOLERANCE`].
pub fn overlap_integral_converged(
    h: &QubitHamiltonian,
    kernel: Kernel,
    correlation_time: f64,
    k: Level,
    j: Level,
) -> Result<f64> {
    overlap_over(h, h.schedule.period, kernel, correlation_time, k, j)
}

pub(crate) fn overlap_over(
    h: &QubitHamiltonian,
    span: f64,
    kernel: Kernel,
    correlation_time: f64,
    k: Level,
    j: Level,
) -> Result<f64> {
    let mut steps = 64usize;
    let eval = |steps: usize| -> Result<f64> {
        let frame = eigenframe(h, &uniform_grid(0.0, span, steps))?;
        overlap_integral(&frame, &h.noise_coupling, kernel, correlation_time, k, j)
    };
    let mut prev = eval(steps)?;
    loop {
        steps *= 2;
        let next = eval(steps)?;
        if (next - prev).abs() <= OVERLAP_TOLERANCE * next.abs().max(f64::MIN_POSITIVE)
            || next == prev
        {
            return Ok(next);
        }
        if steps > 1 << 22 {
            return Err(Error::Resolution {
                what: "overlap quadrature grid".into(),
                value: steps as f64,
                bound: (1u64 << 22) as f64,
            });
        }
        prev = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoherenceReport {
    /// Estimated `D̄(+,−)`.
    pub mc_factor: C64,
    /// Standard error of `|D̄|`.
    pub mc_factor_error: f64,
    /// `Γ̄_s²(+,−)`, radians².
    pub analytic_variance: f64,
    pub analytic_factor: f64,
    /// `v / 4π²`
    pub onset_ratio: f64,
}

/// Predicted variance of `Γ_s(+) − Γ_s(−)` for the configured ensemble.
pub fn ensemble_variance(config: &EnsembleConfig) -> Result<f64> {
    let h = &config.hamiltonian;
    let overlap = overlap_integral_converged(
        h,
        config.noise.kernel,
        config.noise.correlation_time,
        Level::Upper,
        Level::Lower,
    )?;
    variance_analytic(
        h.schedule.cycles as f64,
        h.coupling,
        config.noise.variance,
        overlap,
    )
}

/// σ² giving the requested phase variance `v` for the `(+,−)` pair.
pub fn noise_variance_for(
    h: &QubitHamiltonian,
    kernel: Kernel,
    correlation_time: f64,
    target: f64,
) -> Result<f64> {
    if !(target >= 0.0) {
        return Err(Error::invalid(format!(
            "target variance must be >= 0, got {target}"
        )));
    }
    let overlap =
        overlap_integral_converged(h, kernel, correlation_time, Level::Upper, Level::Lower)?;
    let per_unit = variance_analytic(h.schedule.cycles as f64, h.coupling, 1.0, overlap)?;
    if !(per_unit > 0.0) {
        return Err(Error::invalid(
            "noise does not couple to the level difference",
        ));
    }
    Ok(target / per_unit)
}

/// Closed-form averaged density: populations `|c_k|²`, coherence
/// `c_+ c_−* e^{−iΓ_a(+,−)} exp(−v/2)`.
pub fn predicted_density(config: &EnsembleConfig) -> Result<AveragedDensity> {
    config.validate()?;
    let v = ensemble_variance(config)?;
    let model = PhaseModel::for_noise_step(&config.hamiltonian, config.noise_step())?;
    let c = config.initial_amplitudes;
    let d = decoherence_factor_analytic(v)?;
    let ga = model.gamma_a(Level::Upper) - model.gamma_a(Level::Lower);
    let up_lo = c[1] * c[0].conj() * C64::from_polar(d, -ga);
    AveragedDensity::exact(
        2,
        vec![
            C64::new(c[0].norm_sqr(), 0.0),
            up_lo.conj(),
            up_lo,
            C64::new(c[1].norm_sqr(), 0.0),
        ],
    )
}

pub fn decoherence_report(
    config: &EnsembleConfig,
    outcome: &EnsembleOutcome,
) -> Result<DecoherenceReport> {
    let c = config.initial_amplitudes;
    let scale = c[1] * c[0].conj();
    if scale.norm() == 0.0 {
        return Err(Error::invalid(
            "decoherence factor needs both levels populated",
        ));
    }
    let gamma = outcome.records[1].gamma_a - outcome.records[0].gamma_a;
    let reference = scale * C64::from_polar(1.0, -gamma);
    let rho = outcome.density.get(1, 0);
    let v = ensemble_variance(config)?;
    let samples: Vec<C64> = outcome
        .records
        .chunks(2)
        .map(|r| C64::from_polar(1.0, -(r[1].gamma_s - r[0].gamma_s)))
        .collect();
    let analytic_err = ComplexEstimate::from_samples(&samples).standard_error;
    let mc_factor = rho / reference;
    // the exact engine carries its own spread; bound it by the entry error
    let mc_factor_error = match outcome.slices {
        Some(_) => outcome.density.standard_error(1, 0) / reference.norm(),
        None => analytic_err,
    };
    Ok(DecoherenceReport {
        mc_factor,
        mc_factor_error,
        analytic_variance: v,
        analytic_factor: decoherence_factor_analytic(v)?,
        onset_ratio: v / (4.0 * PI * PI),
    })
}

/// `(2 Re ρ_{+−}, 2 Im ρ_{+−})` in the eigenbasis at `t_f`.
pub fn transverse_magnetization(rho: &AveragedDensity) -> Result<(f64, f64)> {
    if rho.dim() != 2 {
        return Err(Error::invalid(format!(
            "transverse magnetization needs a single qubit, got dimension {}",
            rho.dim()
        )));
    }
    let c = rho.get(1, 0);
    Ok((2.0 * c.re, 2.0 * c.im))
}

/// A shared noise path covering the schedule, for callers that want to reuse one.
pub fn noise_for(config: &EnsembleConfig, index: u64) -> Result<NoisePath> {
    make_noise_path(
        &config.noise,
        config.hamiltonian.duration(),
        config.noise_step(),
        split_seed(config.master_seed, index),
    )
}
