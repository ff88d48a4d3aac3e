//! Runners for the four experiment families. Each returns a [`Table`] plus
//! the derived quantities that go into the manifest.

use std::f64::consts::PI;

use geodeph_core::adiabatic::{
    check_adiabaticity, AdiabaticLimits, ControlSchedule, QubitHamiltonian,
};
use geodeph_core::ensemble::{
    decoherence_report, ensemble_variance, run_ensemble, transverse_magnetization, EnsembleConfig,
    DEFAULT_REALIZATIONS,
};
use geodeph_core::gate::{bell_gate_run, calibrate_ising, GateConfig, PairHamiltonian};
use geodeph_core::mc::{ordered_map, split_seed};
use geodeph_core::noise::{estimate_autocorrelation, make_noise_path, NoiseSpec};
use geodeph_core::shor::{
    dft_phase_variance, gate_overlap_estimate, gqc_onset, runtime_scaling, ShorInstance,
};
use geodeph_core::{Error, C64};
use serde_json::{json, Map, Value};

use crate::config::{
    AgpParams, ExperimentConfig, FieldParams, GateParams, NoiseLevels, NoiseValidateParams, Params,
    ShorParams, ShorVariance,
};
use crate::error::{CliError, CliResult};

/// Samples a noise-validate run may hold in memory.
pub const MAX_NOISE_SAMPLES: u64 = 1 << 28;
/// Default path count for noise-validate.
pub const DEFAULT_NOISE_PATHS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Table {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub derived: Map<String, Value>,
    pub warnings: Vec<String>,
}

fn num(x: f64) -> Value {
    // non-finite values have no JSON number form
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(format!("{x}"))
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map(num).unwrap_or(Value::Null)
}

fn limits(cfg: &ExperimentConfig) -> AdiabaticLimits {
    AdiabaticLimits {
        strict: cfg.strict_adiabatic,
        ..AdiabaticLimits::default()
    }
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    if cfg.slow_noise && cfg.strict_adiabatic {
        return Err(CliError::Adiabaticity(cfg.warnings.join("; ")));
    }
    let mut out = match &cfg.params {
        Params::NoiseValidate(p) => noise_validate(cfg, p),
        Params::AgpDephase(p) => agp_dephase(cfg, p),
        Params::GateFidelity(p) => gate_fidelity(cfg, p),
        Params::ShorScan(p) => shor_scan(p),
    }?;
    let mut warnings = cfg.warnings.clone();
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

fn power_at(levels: &NoiseLevels, i: usize) -> Option<f64> {
    levels.power_density.as_ref().map(|p| p[i])
}

fn noise_validate(cfg: &ExperimentConfig, p: &NoiseValidateParams) -> CliResult<Outcome> {
    let spec = NoiseSpec::new(p.levels.sigma2[0], p.tau_c, p.dimension)?;
    let paths_n = cfg.realizations.unwrap_or(DEFAULT_NOISE_PATHS);
    let per_path = (p.duration / p.dt).ceil() as u64 + 1;
    let total = per_path
        .saturating_mul(paths_n as u64)
        .saturating_mul(p.dimension as u64);
    if total > MAX_NOISE_SAMPLES {
        return Err(Error::Resource {
            what: "noise samples".into(),
            requested: total,
            limit: MAX_NOISE_SAMPLES,
        }
        .into());
    }
    let paths = ordered_map(paths_n, |i| {
        make_noise_path(
            &spec,
            p.duration,
            p.dt,
            split_seed(cfg.master_seed, i as u64),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let est = estimate_autocorrelation(&paths, &p.lags)?;
    let mut table = Table::new(&[
        "lag_s",
        "autocovariance_field2",
        "standard_error_field2",
        "kernel_field2",
        "z_score",
    ]);
    for e in &est {
        let kernel = spec.autocovariance(e.lag);
        let z = if e.standard_error > 0.0 {
            (e.estimate - kernel) / e.standard_error
        } else {
            0.0
        };
        table.push(vec![
            num(e.lag),
            num(e.estimate),
            num(e.standard_error),
            num(kernel),
            num(z),
        ]);
    }
    let mut derived = Map::new();
    derived.insert("sigma2_field2".into(), num(spec.variance));
    derived.insert("tau_c_s".into(), num(p.tau_c));
    derived.insert("dt_s".into(), num(p.dt));
    derived.insert("paths".into(), json!(paths_n));
    derived.insert("samples_per_path".into(), json!(per_path));
    Ok(Outcome {
        table,
        derived,
        warnings: Vec::new(),
    })
}

fn schedule(f: &FieldParams) -> CliResult<ControlSchedule> {
    Ok(ControlSchedule::new(
        f.magnitude,
        f.cone_angle,
        f.period,
        f.cycles,
    )?)
}

fn agp_dephase(cfg: &ExperimentConfig, p: &AgpParams) -> CliResult<Outcome> {
    let h = QubitHamiltonian::new(p.field.gamma, schedule(&p.field)?, p.coupling)?;
    let dim = p.coupling.noise_dimension();
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let report = check_adiabaticity(h.gap(), p.field.period, p.tau_c, &limits(cfg));
    let mut table = Table::new(&[
        "sigma2_field2",
        "power_density_field2_per_hz",
        "tau_c_s",
        "variance_rad2",
        "onset_ratio",
        "coherence_abs",
        "coherence_se",
        "decoherence_mc",
        "decoherence_mc_se",
        "decoherence_analytic",
        "magnetization_x",
        "magnetization_y",
        "magnetization_abs",
        "magnetization_phase_rad",
        "gamma_a_difference_rad",
    ]);
    let mut variances = Vec::new();
    let mut warnings = Vec::new();
    for (i, &sigma2) in p.levels.sigma2.iter().enumerate() {
        let mut ec = EnsembleConfig::new(h, NoiseSpec::new(sigma2, p.tau_c, dim)?, [amp, amp]);
        ec.engine = p.engine;
        ec.realizations = cfg.realizations.unwrap_or(DEFAULT_REALIZATIONS);
        ec.master_seed = cfg.master_seed;
        ec.noise_dt = p.noise_dt;
        ec.slices = p.slices;
        ec.limits = limits(cfg);
        let out = run_ensemble(&ec)?;
        let rep = decoherence_report(&ec, &out)?;
        variances.push(ensemble_variance(&ec)?);
        if let Some(w) = out.records.first().and_then(|r| r.adiabaticity_warning) {
            if i == 0 {
                warnings.push(format!(
                    "adiabaticity limits exceeded: {}",
                    w.describe(&ec.limits)
                ));
            }
        }
        let (mx, my) = transverse_magnetization(&out.density)?;
        let rho = out.density.get(1, 0);
        let ga = out.records[1].gamma_a - out.records[0].gamma_a;
        table.push(vec![
            num(sigma2),
            opt_num(power_at(&p.levels, i)),
            num(p.tau_c),
            num(rep.analytic_variance),
            num(rep.onset_ratio),
            num(rho.norm()),
            num(out.density.standard_error(1, 0)),
            num(rep.mc_factor.norm()),
            num(rep.mc_factor_error),
            num(rep.analytic_factor),
            num(mx),
            num(my),
            num(mx.hypot(my)),
            num(my.atan2(mx)),
            num(ga),
        ]);
    }
    let mut derived = Map::new();
    derived.insert("gap_rad_per_s".into(), num(h.gap()));
    derived.insert("cone_angle_rad".into(), num(p.field.cone_angle));
    derived.insert("field_magnitude".into(), num(p.field.magnitude));
    derived.insert("period_ratio".into(), num(report.period_ratio));
    derived.insert("noise_ratio".into(), num(report.noise_ratio));
    derived.insert("eta".into(), json!(p.field.cycles));
    derived.insert(
        "sigma2_field2".into(),
        json!(p.levels.sigma2.iter().copied().map(num).collect::<Vec<_>>()),
    );
    derived.insert(
        "variance_rad2".into(),
        json!(variances.into_iter().map(num).collect::<Vec<_>>()),
    );
    Ok(Outcome {
        table,
        derived,
        warnings,
    })
}

fn gate_fidelity(cfg: &ExperimentConfig, p: &GateParams) -> CliResult<Outcome> {
    let s = schedule(&p.field)?;
    let h = if p.conditional_phase == 0.0 {
        PairHamiltonian::uniform(p.field.gamma, s, p.coupling)?
    } else {
        calibrate_ising(p.field.gamma, s, p.coupling, p.conditional_phase)?
    };
    let dim = p.coupling.noise_dimension();
    let report = check_adiabaticity(h.min_gap(), p.field.period, p.tau_c, &limits(cfg));
    let mut table = Table::new(&[
        "sigma2_field2",
        "power_density_field2_per_hz",
        "tau_c_s",
        "overlap_sum_s2",
        "variance_rad2",
        "onset_ratio",
        "conditional_phase_rad",
        "fidelity",
        "fidelity_se",
        "fidelity_closed_form",
        "decoherence_analytic",
        "decoherence_mc",
        "decoherence_mc_se",
    ]);
    let mut variances = Vec::new();
    for (i, &sigma2) in p.levels.sigma2.iter().enumerate() {
        let mut gc = GateConfig::new(h, NoiseSpec::new(sigma2, p.tau_c, dim)?);
        gc.realizations = cfg.realizations.unwrap_or(DEFAULT_REALIZATIONS);
        gc.master_seed = cfg.master_seed;
        gc.noise_dt = p.noise_dt;
        gc.limits = limits(cfg);
        let r = bell_gate_run(&gc)?;
        variances.push(r.analytic_variance);
        let m = r.mc_factor.modulus();
        table.push(vec![
            num(sigma2),
            opt_num(power_at(&p.levels, i)),
            num(p.tau_c),
            num(r.overlap_sum),
            num(r.analytic_variance),
            num(r.onset_ratio),
            num(r.conditional_phase),
            num(r.fidelity.mean),
            num(r.fidelity.standard_error),
            num(r.fidelity_closed_form),
            num(r.decoherence_factor),
            num(m.mean),
            num(m.standard_error),
        ]);
    }
    let mut derived = Map::new();
    derived.insert("min_gap_rad_per_s".into(), num(h.min_gap()));
    derived.insert("ising_field".into(), num(h.ising_field));
    derived.insert("period_ratio".into(), num(report.period_ratio));
    derived.insert("noise_ratio".into(), num(report.noise_ratio));
    derived.insert("eta".into(), json!(1));
    derived.insert(
        "variance_rad2".into(),
        json!(variances.into_iter().map(num).collect::<Vec<_>>()),
    );
    Ok(Outcome {
        table,
        derived,
        warnings: Vec::new(),
    })
}

fn shor_scan(p: &ShorParams) -> CliResult<Outcome> {
    let mut rows = Vec::new();
    let mut onset = Vec::new();
    for &(n, y) in &p.instances {
        let inst = ShorInstance::new(n, y, p.offset)?;
        match &p.variance {
            ShorVariance::Direct(vs) => {
                for &v in vs {
                    rows.push((inst, v));
                    onset.push(None);
                }
            }
            ShorVariance::FromGate(g) => {
                let s2 = g.cone_angle.sin().powi(2);
                let overlap = gate_overlap_estimate(g.kappa, g.tau_c, g.period, s2);
                for &sigma2 in &g.levels.sigma2 {
                    rows.push((
                        inst,
                        dft_phase_variance(inst.bits, g.gamma, sigma2, overlap)?,
                    ));
                    // P̄/V over Δω is σ² whichever form was given
                    onset.push(Some(gqc_onset(
                        sigma2, g.tau_c, 1.0, g.period, inst.bits, g.gamma, s2,
                    )?));
                }
            }
        }
    }
    let scaled = runtime_scaling(&rows, p.mode)?;
    let mut table = Table::new(&[
        "modulus_n",
        "base_y",
        "period_r",
        "register_q",
        "bits_l",
        "log2_modulus",
        "variance_rad2",
        "success_probability",
        "runs_needed",
        "regime",
        "counting_ratio",
        "flagged",
        "gqc_onset_ratio",
    ]);
    for (row, o) in scaled.iter().zip(&onset) {
        table.push(vec![
            json!(row.modulus),
            json!(row.base),
            json!(row.period),
            json!(row.register_size),
            json!(row.bits),
            num(row.log2_modulus),
            num(row.variance),
            num(row.success_probability),
            num(row.runs_needed),
            serde_json::to_value(row.regime)?,
            num(row.counting_ratio),
            json!(row.flagged),
            opt_num(*o),
        ]);
    }
    let mut derived = Map::new();
    derived.insert("decohered_threshold_rad2".into(), num(4.0 * PI * PI));
    derived.insert(
        "eta".into(),
        json!(scaled
            .iter()
            .map(|r| u64::from(r.bits) * u64::from(r.bits - 1) / 2)
            .collect::<Vec<_>>()),
    );
    Ok(Outcome {
        table,
        derived,
        warnings: Vec::new(),
    })
}
