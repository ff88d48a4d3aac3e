//! Period finding with a noisy Fourier transform stage.
//!
//! The register after modular exponentiation and measurement of the work
//! register holds `Σ_{j=0}^{A} |jr + l⟩`. Gate noise in the transform adds a
//! random phase `Γ_s(j)` per computational path, drawn i.i.d. normal with
//! variance `v`, so off-diagonal path pairs are damped by `exp(−v)` on
//! average.

use std::f64::consts::{PI, TAU};

use num_integer::Integer;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::mc::{pairwise_sum, rng_from_seed};

/// Largest modulus accepted by the brute-force routines.
pub const MAX_MODULUS: u64 = 1 << 16;
/// `Σ_l I^l ≈ κ τc T sin²θ₀` for one controlled-phase gate; κ = 32 is the
/// Bell-pair value and makes the onset ratio exactly `v/4π²`.
pub const DEFAULT_OVERLAP_CONSTANT: f64 = 32.0;

/// Smallest `r > 0` with `y^r ≡ 1 (mod N)`.
pub fn find_period(modulus: u64, base: u64) -> Result<u64> {
    if modulus < 2 {
        return Err(Error::invalid(format!(
            "modulus must be >= 2, got {modulus}"
        )));
    }
    if modulus > MAX_MODULUS {
        return Err(Error::Resource {
            what: "modulus".into(),
            requested: modulus,
            limit: MAX_MODULUS,
        });
    }
    let y = base % modulus;
    if y.gcd(&modulus) != 1 {
        return Err(Error::invalid(format!(
            "base {base} is not co-prime with {modulus}"
        )));
    }
    let mut acc = y;
    let mut r = 1;
    while acc != 1 {
        acc = acc * y % modulus;
        r += 1;
    }
    Ok(r)
}

/// Smallest power of two `q` with `N² ≤ q ≤ 2N²`, and `L = log₂ q`.
pub fn choose_q(modulus: u64) -> Result<(u64, u32)> {
    if modulus < 2 {
        return Err(Error::invalid(format!(
            "modulus must be >= 2, got {modulus}"
        )));
    }
    if modulus > MAX_MODULUS {
        return Err(Error::Resource {
            what: "modulus".into(),
            requested: modulus,
            limit: MAX_MODULUS,
        });
    }
    let q = (modulus * modulus).next_power_of_two();
    Ok((q, q.trailing_zeros()))
}

/// Count of `1 ≤ m < r` co-prime with `r`; `φ(1) = 1`.
pub fn euler_phi(r: u64) -> u64 {
    if r <= 1 {
        return 1;
    }
    (1..r).filter(|m| m.gcd(&r) == 1).count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShorInstance {
    pub modulus: u64,
    pub base: u64,
    pub period: u64,
    pub register_size: u64,
    pub bits: u32,
    pub offset: u64,
    /// Largest `A` with `A r + l < q`.
    pub a_max: u64,
}

impl ShorInstance {
    pub fn new(modulus: u64, base: u64, offset: u64) -> Result<Self> {
        let period = find_period(modulus, base)?;
        let (register_size, bits) = choose_q(modulus)?;
        if offset >= period {
            return Err(Error::invalid(format!(
                "offset {offset} must be below the period {period}"
            )));
        }
        let a_max = (register_size - 1 - offset) / period;
        Ok(ShorInstance {
            modulus,
            base,
            period,
            register_size,
            bits,
            offset,
            a_max,
        })
    }

    /// Number of paths `A + 1` in the prepared state.
    pub fn terms(&self) -> u64 {
        self.a_max + 1
    }

    pub fn period_divides_register(&self) -> bool {
        self.register_size % self.period == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// `r | q`: the sum over `q/r` paths with prefactor `√r/q`.
    ExactDivisor,
    /// `A + 1` paths with prefactor `1/√((A+1) q)`.
    #[default]
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyAmplitudeModel {
    pub instance: ShorInstance,
    /// Variance `v` of each path phase, radians².
    pub path_phase_variance: f64,
    pub mode: AmplitudeMode,
}

impl NoisyAmplitudeModel {
    pub fn new(
        instance: ShorInstance,
        path_phase_variance: f64,
        mode: AmplitudeMode,
    ) -> Result<Self> {
        if !(path_phase_variance >= 0.0) {
            return Err(Error::invalid(format!(
                "phase variance must be >= 0, got {path_phase_variance}"
            )));
        }
        if mode == AmplitudeMode::ExactDivisor && !instance.period_divides_register() {
            return Err(Error::invalid(format!(
                "exact-divisor mode needs r | q, got r = {}, q = {}",
                instance.period, instance.register_size
            )));
        }
        Ok(NoisyAmplitudeModel {
            instance,
            path_phase_variance,
            mode,
        })
    }

    /// Controlled-phase gates in the transform, `L(L−1)/2`.
    pub fn eta(&self) -> u64 {
        let l = self.instance.bits as u64;
        l * (l - 1) / 2
    }

    fn terms(&self) -> u64 {
        match self.mode {
            AmplitudeMode::ExactDivisor => self.instance.register_size / self.instance.period,
            AmplitudeMode::General => self.instance.terms(),
        }
    }

    fn prefactor(&self) -> f64 {
        let q = self.instance.register_size as f64;
        match self.mode {
            AmplitudeMode::ExactDivisor => (self.instance.period as f64).sqrt() / q,
            AmplitudeMode::General => 1.0 / ((self.terms() as f64) * q).sqrt(),
        }
    }

    fn check_outcome(&self, c: u64) -> Result<()> {
        if c >= self.instance.register_size {
            return Err(Error::invalid(format!(
                "outcome {c} outside [0, {})",
                self.instance.register_size
            )));
        }
        Ok(())
    }

    /// `f̃(c)` for given path phases `Γ_s(j)`, `j = 0..terms`.
    pub fn amplitude_with_phases(&self, c: u64, phases: &[f64]) -> Result<C64> {
        self.check_outcome(c)?;
        let n = self.terms();
        if phases.len() as u64 != n {
            return Err(Error::invalid(format!(
                "need {n} path phases, got {}",
                phases.len()
            )));
        }
        let q = self.instance.register_size;
        let r = self.instance.period;
        let l = self.instance.offset;
        let mut acc = ZERO;
        for (j, g) in phases.iter().enumerate() {
            let x = ((j as u64 * r + l) % q) * c % q;
            acc += C64::from_polar(1.0, TAU * x as f64 / q as f64 + g);
        }
        Ok(acc * self.prefactor())
    }

    pub fn draw_phases(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let s = self.path_phase_variance.sqrt();
        (0..self.terms())
            .map(|_| {
                let xi: f64 = rng.sample(StandardNormal);
                s * xi
            })
            .collect()
    }

    /// One noisy realization of `f̃(c)`.
    pub fn amplitude_sample(&self, c: u64, seed: u64) -> Result<C64> {
        self.amplitude_with_phases(c, &self.draw_phases(seed))
    }

    /// `|f̃(c)|²` for every `c` under one realization of the path phases.
    /// Outcomes sharing `rc mod q` share the modulus, so each residue is
    /// summed once.
    pub fn sample_distribution(&self, seed: u64) -> Vec<f64> {
        let phases = self.draw_phases(seed);
        let q = self.instance.register_size;
        let r = self.instance.period;
        let roots: Vec<C64> = (0..q)
            .map(|x| C64::from_polar(1.0, TAU * x as f64 / q as f64))
            .collect();
        let weighted: Vec<C64> = phases.iter().map(|g| C64::from_polar(1.0, *g)).collect();
        let norm = self.prefactor() * self.prefactor();
        let mut by_residue = vec![f64::NAN; q as usize];
        (0..q)
            .map(|c| {
                let m = (r * c % q) as usize;
                if by_residue[m].is_nan() {
                    let mut acc = ZERO;
                    for (j, w) in weighted.iter().enumerate() {
                        acc += w * roots[(j as u64 * m as u64 % q) as usize];
                    }
                    by_residue[m] = acc.norm_sqr() * norm;
                }
                by_residue[m]
            })
            .collect()
    }

    /// Noise-averaged `P(c)`.
    pub fn prob_averaged(&self, c: u64) -> Result<f64> {
        self.check_outcome(c)?;
        let q = self.instance.register_size;
        let m = (self.instance.period * c % q) as f64;
        let alpha = TAU * m / q as f64;
        let n = self.terms();
        let damp = (-self.path_phase_variance).exp();
        let terms: Vec<f64> = (1..n)
            .map(|d| (n - d) as f64 * (d as f64 * alpha).cos())
            .collect();
        let off = 2.0 * damp * pairwise_sum(&terms);
        Ok((n as f64 + off) * self.prefactor() * self.prefactor())
    }

    pub fn distribution(&self) -> Vec<f64> {
        (0..self.instance.register_size)
            .map(|c| self.prob_averaged(c).expect("c in range"))
            .collect()
    }
}

/// Noiseless outcome distribution by direct transform of the prepared state.
pub fn dft_distribution(instance: &ShorInstance) -> Vec<f64> {
    let q = instance.register_size;
    let amp = 1.0 / (instance.terms() as f64).sqrt();
    let support: Vec<u64> = (0..instance.terms())
        .map(|j| j * instance.period + instance.offset)
        .collect();
    (0..q)
        .map(|c| {
            let mut acc = ZERO;
            for &a in &support {
                acc += C64::from_polar(amp, TAU * ((a * c) % q) as f64 / q as f64);
            }
            acc.norm_sqr() / q as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Noiseless,
    Partial,
    Decohered,
}

impl Regime {
    pub fn classify(v: f64) -> Regime {
        if v == 0.0 {
            Regime::Noiseless
        } else if v >= 4.0 * PI * PI {
            Regime::Decohered
        } else {
            Regime::Partial
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodFlag {
    /// `r = 1`: no `c′` is both below `r` and co-prime with it.
    NoValidOutcome,
    /// `r = 2`: the only useful `c′` is 1.
    SingleCoprime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessReport {
    pub p_of_c: Vec<f64>,
    pub success_probability: f64,
    pub runs_needed: f64,
    pub regime: Regime,
    /// `(c, c′)` for every outcome counted as a success.
    pub successful: Vec<(u64, u64)>,
    pub flag: Option<PeriodFlag>,
}

/// The `c′` with `|rc − c′q| ≤ r/2`, if any.
pub fn nearest_multiple(instance: &ShorInstance, c: u64) -> Option<u64> {
    let (r, q) = (instance.period as u128, instance.register_size as u128);
    let rc = r * c as u128;
    let cp = (rc + q / 2) / q;
    let dist = (rc as i128 - (cp * q) as i128).unsigned_abs();
    if 2 * dist <= r {
        Some(cp as u64)
    } else {
        None
    }
}

/// `P_suc = Σ′ P(c)` over outcomes whose `c′` lies in `[1, r)` and is co-prime with `r`.
pub fn success_probability(model: &NoisyAmplitudeModel) -> SuccessReport {
    let inst = &model.instance;
    let r = inst.period;
    let p_of_c = model.distribution();
    let mut successful = Vec::new();
    for c in 0..inst.register_size {
        if let Some(cp) = nearest_multiple(inst, c) {
            if cp >= 1 && cp < r && cp.gcd(&r) == 1 {
                successful.push((c, cp));
            }
        }
    }
    let mass: Vec<f64> = successful
        .iter()
        .map(|&(c, _)| p_of_c[c as usize])
        .collect();
    let p = pairwise_sum(&mass).clamp(0.0, 1.0);
    let flag = match r {
        1 => Some(PeriodFlag::NoValidOutcome),
        2 => Some(PeriodFlag::SingleCoprime),
        _ => None,
    };
    SuccessReport {
        p_of_c,
        success_probability: p,
        runs_needed: if p > 0.0 { 1.0 / p } else { f64::INFINITY },
        regime: Regime::classify(model.path_phase_variance),
        successful,
        flag,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub modulus: u64,
    pub base: u64,
    pub period: u64,
    pub register_size: u64,
    pub bits: u32,
    pub log2_modulus: f64,
    pub variance: f64,
    pub success_probability: f64,
    pub runs_needed: f64,
    pub regime: Regime,
    /// `runs_needed · φ(r)/q`, 1 in the decohered limit.
    pub counting_ratio: f64,
    /// Set when `P_suc = 0` or the period is degenerate.
    pub flagged: bool,
}

pub fn runtime_scaling(
    rows: &[(ShorInstance, f64)],
    mode: AmplitudeMode,
) -> Result<Vec<ScalingRow>> {
    rows.iter()
        .map(|(inst, v)| {
            let model = NoisyAmplitudeModel::new(*inst, *v, mode)?;
            let rep = success_probability(&model);
            Ok(ScalingRow {
                modulus: inst.modulus,
                base: inst.base,
                period: inst.period,
                register_size: inst.register_size,
                bits: inst.bits,
                log2_modulus: (inst.modulus as f64).log2(),
                variance: *v,
                success_probability: rep.success_probability,
                runs_needed: rep.runs_needed,
                regime: rep.regime,
                counting_ratio: rep.runs_needed * euler_phi(inst.period) as f64
                    / inst.register_size as f64,
                flagged: rep.success_probability == 0.0
                    || rep.flag == Some(PeriodFlag::NoValidOutcome),
            })
        })
        .collect()
}

/// `κ τc T sin²θ₀`
pub fn gate_overlap_estimate(
    kappa: f64,
    correlation_time: f64,
    period: f64,
    sin2_theta: f64,
) -> f64 {
    kappa * correlation_time * period * sin2_theta
}

/// `[L(L−1)/2] γ² σ² (Σ_l I^l) / 4`
pub fn dft_phase_variance(
    bits: u32,
    coupling: f64,
    sigma2: f64,
    gate_overlap_sum: f64,
) -> Result<f64> {
    if bits < 2 {
        return Err(Error::invalid(format!(
            "the transform needs at least 2 qubits, got {bits}"
        )));
    }
    let eta = (bits as f64) * (bits as f64 - 1.0) / 2.0;
    crate::ensemble::variance_analytic(eta, coupling, sigma2, gate_overlap_sum)
}

/// `π² / (T L(L−1) γ² sin²θ₀)`
pub fn gqc_onset_threshold(period: f64, bits: u32, coupling: f64, sin2_theta: f64) -> Result<f64> {
    let l = bits as f64;
    let denom = period * l * (l - 1.0) * coupling * coupling * sin2_theta;
    if !(denom > 0.0) {
        return Err(Error::invalid(
            "T, L(L−1), γ and sin²θ₀ must all be positive",
        ));
    }
    Ok(PI * PI / denom)
}

/// `(P̄/V)(τc/Δω)` over [`gqc_onset_threshold`]; ≥ 1 means the transform decoheres.
pub fn gqc_onset(
    power_density: f64,
    correlation_time: f64,
    bandwidth: f64,
    period: f64,
    bits: u32,
    coupling: f64,
    sin2_theta: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    if !(power_density >= 0.0 && correlation_time > 0.0) {
        return Err(Error::invalid(
            "power density must be >= 0 and correlation time > 0",
        ));
    }
    Ok(power_density * correlation_time
        / bandwidth
        / gqc_onset_threshold(period, bits, coupling, sin2_theta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periods() {
        assert_eq!(find_period(15, 7).unwrap(), 4);
        assert_eq!(find_period(21, 2).unwrap(), 6);
        assert_eq!(find_period(35, 1).unwrap(), 1);
        assert!(find_period(15, 5).is_err());
        assert!(matches!(
            find_period(MAX_MODULUS + 1, 2),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn register_sizes() {
        assert_eq!(choose_q(15).unwrap(), (256, 8));
        assert_eq!(choose_q(21).unwrap(), (512, 9));
        assert_eq!(choose_q(4).unwrap(), (16, 4));
    }

    #[test]
    fn totients() {
        assert_eq!(euler_phi(1), 1);
        assert_eq!(euler_phi(4), 2);
        assert_eq!(euler_phi(12), 4);
    }

    #[test]
    fn instance_bounds() {
        let i = ShorInstance::new(21, 2, 3).unwrap();
        assert!(i.a_max * i.period + i.offset < i.register_size);
        assert!(i.register_size <= (i.a_max + 1) * i.period + i.offset);
        assert!(ShorInstance::new(21, 2, 6).is_err());
    }

    #[test]
    fn exact_divisor_needs_divisibility() {
        let i = ShorInstance::new(21, 2, 0).unwrap();
        assert!(NoisyAmplitudeModel::new(i, 0.0, AmplitudeMode::ExactDivisor).is_err());
        assert!(NoisyAmplitudeModel::new(i, 0.0, AmplitudeMode::General).is_ok());
    }

    #[test]
    fn noiseless_peak_and_null() {
        let i = ShorInstance::new(15, 7, 1).unwrap();
        let m = NoisyAmplitudeModel::new(i, 0.0, AmplitudeMode::ExactDivisor).unwrap();
        let peak = m.amplitude_sample(64, 1).unwrap().norm_sqr();
        assert!((peak - 0.25).abs() < 1e-12);
        // rc mod q = q/2
        let null = m.amplitude_sample(32, 1).unwrap().norm_sqr();
        assert!(null < 1e-12);
    }

    #[test]
    fn flat_when_fully_dephased() {
        let i = ShorInstance::new(15, 7, 0).unwrap();
        let m = NoisyAmplitudeModel::new(i, 1e3, AmplitudeMode::General).unwrap();
        for c in [0, 5, 64, 200] {
            assert!((m.prob_averaged(c).unwrap() - 1.0 / 256.0).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_period_has_no_success() {
        let i = ShorInstance::new(15, 1, 0).unwrap();
        let rep =
            success_probability(&NoisyAmplitudeModel::new(i, 0.0, AmplitudeMode::General).unwrap());
        assert_eq!(rep.success_probability, 0.0);
        assert!(rep.runs_needed.is_infinite());
        assert_eq!(rep.flag, Some(PeriodFlag::NoValidOutcome));
    }

    #[test]
    fn onset_threshold_scaling() {
        let a = gqc_onset(1.0, 1.0, 1.0, 1.0, 64, 1.0, 0.5).unwrap();
        let b = gqc_onset(1.0, 1.0, 1.0, 1.0, 128, 1.0, 0.5).unwrap();
        assert!((b / a - 4.0).abs() < 0.04);
        assert!(gqc_onset(1.0, 1.0, 0.0, 1.0, 8, 1.0, 0.5).is_err());
    }
}
