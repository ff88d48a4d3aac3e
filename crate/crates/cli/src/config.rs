//! Experiment configuration: a TOML file (or the `config` object of a run
//! manifest) validated into an [`ExperimentConfig`]. Validation reports
//! every problem at once.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use geodeph_core::adiabatic::NoiseCoupling;
use geodeph_core::ensemble::Engine;
use geodeph_core::shor::{AmplitudeMode, DEFAULT_OVERLAP_CONSTANT};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NoiseValidate,
    AgpDephase,
    GateFidelity,
    ShorScan,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::NoiseValidate,
        Experiment::AgpDephase,
        Experiment::GateFidelity,
        Experiment::ShorScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NoiseValidate => "noise-validate",
            Experiment::AgpDephase => "agp-dephase",
            Experiment::GateFidelity => "gate-fidelity",
            Experiment::ShorScan => "shor-scan",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Human-readable parameter list, quoted in missing-parameter errors.
    pub fn schema(self) -> &'static str {
        match self {
            Experiment::NoiseValidate => {
                "noise.sigma2 | (noise.power_density, noise.bandwidth), noise.tau_c, sampling.duration \
                 [optional: noise.dimension, sampling.dt, sampling.lags, realizations]"
            }
            Experiment::AgpDephase => {
                "field.gamma, field.magnitude + field.cone_angle | (field.b0, field.b_rf), field.period, \
                 noise.sigma2 | (noise.power_density, noise.bandwidth), noise.tau_c \
                 [optional: field.cycles, noise.coupling, engine.kind, engine.noise_dt, engine.slices, realizations]"
            }
            Experiment::GateFidelity => {
                "field.gamma, field.magnitude + field.cone_angle | (field.b0, field.b_rf), field.period, \
                 gate.conditional_phase, noise.sigma2 | (noise.power_density, noise.bandwidth), noise.tau_c \
                 [optional: noise.coupling, engine.noise_dt, realizations]"
            }
            Experiment::ShorScan => {
                "shor.instances, shor.variance | (gate.gamma, gate.sigma2 | (gate.power_density, gate.bandwidth), \
                 gate.tau_c, gate.period, gate.cone_angle) [optional: shor.offset, shor.mode, gate.kappa]"
            }
        }
    }

    fn sections(self) -> &'static [(&'static str, &'static [&'static str])] {
        const NOISE: &[&str] = &["sigma2", "power_density", "bandwidth", "tau_c", "dimension"];
        const COUPLED_NOISE: &[&str] =
            &["sigma2", "power_density", "bandwidth", "tau_c", "coupling"];
        const FIELD: &[&str] = &[
            "gamma",
            "magnitude",
            "cone_angle",
            "b0",
            "b_rf",
            "period",
            "cycles",
        ];
        const GATE_FIELD: &[&str] = &["gamma", "magnitude", "cone_angle", "b0", "b_rf", "period"];
        match self {
            Experiment::NoiseValidate => {
                &[("noise", NOISE), ("sampling", &["duration", "dt", "lags"])]
            }
            Experiment::AgpDephase => &[
                ("field", FIELD),
                ("noise", COUPLED_NOISE),
                ("engine", &["kind", "noise_dt", "slices"]),
            ],
            Experiment::GateFidelity => &[
                ("field", GATE_FIELD),
                ("gate", &["conditional_phase"]),
                ("noise", COUPLED_NOISE),
                ("engine", &["noise_dt"]),
            ],
            Experiment::ShorScan => &[
                ("shor", &["instances", "offset", "mode", "variance"]),
                (
                    "gate",
                    &[
                        "gamma",
                        "sigma2",
                        "power_density",
                        "bandwidth",
                        "tau_c",
                        "period",
                        "cone_angle",
                        "kappa",
                    ],
                ),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

const TOP_LEVEL: &[&str] = &[
    "experiment",
    "master_seed",
    "realizations",
    "threads",
    "strict_adiabatic",
    "output",
];
const OUTPUT_KEYS: &[&str] = &["path", "format"];

/// Noise amplitude given directly as σ² or as a power density over a bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevels {
    /// σ² per sweep point, field².
    pub sigma2: Vec<f64>,
    /// P̄/V per sweep point when the power form was used.
    pub power_density: Option<Vec<f64>>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub gamma: f64,
    pub magnitude: f64,
    pub cone_angle: f64,
    pub period: f64,
    pub cycles: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseValidateParams {
    pub levels: NoiseLevels,
    pub tau_c: f64,
    pub dimension: usize,
    pub duration: f64,
    pub dt: f64,
    pub lags: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgpParams {
    pub field: FieldParams,
    pub levels: NoiseLevels,
    pub tau_c: f64,
    pub coupling: NoiseCoupling,
    pub engine: Engine,
    pub noise_dt: Option<f64>,
    pub slices: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub field: FieldParams,
    pub conditional_phase: f64,
    pub levels: NoiseLevels,
    pub tau_c: f64,
    pub coupling: NoiseCoupling,
    pub noise_dt: Option<f64>,
}

/// Control-noise parameters from which each instance's `v` is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct ShorGateNoise {
    pub gamma: f64,
    pub levels: NoiseLevels,
    pub tau_c: f64,
    pub period: f64,
    pub cone_angle: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShorVariance {
    Direct(Vec<f64>),
    FromGate(ShorGateNoise),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShorParams {
    pub instances: Vec<(u64, u64)>,
    pub offset: u64,
    pub mode: AmplitudeMode,
    pub variance: ShorVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    NoiseValidate(NoiseValidateParams),
    AgpDephase(AgpParams),
    GateFidelity(GateParams),
    ShorScan(ShorParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub master_seed: u64,
    pub realizations: Option<usize>,
    pub threads: Option<usize>,
    pub strict_adiabatic: bool,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub params: Params,
    /// Non-fatal findings, e.g. τc close to T.
    pub warnings: Vec<String>,
    /// τc ≥ T/10 somewhere in the configuration.
    pub slow_noise: bool,
    /// The validated tree, echoed into the manifest.
    pub tree: Value,
}

/// Reads a config file: TOML, or JSON (a run manifest or a bare config object).
pub fn load_tree(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)?;
    let is_json =
        path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        Ok(match v {
            Value::Object(mut m) if m.contains_key("config") && m.contains_key("tool") => {
                m.remove("config").unwrap()
            }
            other => other,
        })
    } else {
        parse_toml(&text)
    }
}

pub fn parse_toml(text: &str) -> CliResult<Value> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(vec![format!("TOML: {e}")]))?;
    Ok(serde_json::to_value(table)?)
}

/// Parses and validates TOML text.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Vec<String>> {
    let tree = parse_toml(raw).map_err(|e| match e {
        CliError::Config(m) => m,
        other => vec![other.to_string()],
    })?;
    validate_tree(&tree)
}

struct Reader<'a> {
    root: &'a Map<String, Value>,
    experiment: Experiment,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn get(&self, path: &str) -> Option<&'a Value> {
        let mut parts = path.split('.');
        let mut cur = self.root.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_object()?.get(p)?;
        }
        Some(cur)
    }

    fn has(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    fn missing(&mut self, path: &str) {
        let e = self.experiment;
        self.errors.push(format!(
            "missing required parameter `{path}` for experiment `{e}`; schema: {}",
            e.schema()
        ));
    }

    fn type_error(&mut self, path: &str, want: &str, got: &Value) {
        self.errors
            .push(format!("`{path}` must be {want}, got {got}"));
    }

    fn f64(&mut self, path: &str) -> Option<f64> {
        let v = self.get(path)?;
        match v.as_f64() {
            Some(x) => Some(x),
            None => {
                self.type_error(path, "a number", v);
                None
            }
        }
    }

    fn req_f64(&mut self, path: &str) -> Option<f64> {
        if !self.has(path) {
            self.missing(path);
            return None;
        }
        self.f64(path)
    }

    fn positive(&mut self, path: &str, x: Option<f64>) -> Option<f64> {
        match x {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.errors
                    .push(format!("`{path}` must be a finite number > 0, got {x}"));
                None
            }
            None => None,
        }
    }

    fn u64(&mut self, path: &str) -> Option<u64> {
        let v = self.get(path)?;
        match v.as_u64() {
            Some(x) => Some(x),
            None => {
                self.type_error(path, "a non-negative integer", v);
                None
            }
        }
    }

    fn bool(&mut self, path: &str) -> Option<bool> {
        let v = self.get(path)?;
        match v.as_bool() {
            Some(x) => Some(x),
            None => {
                self.type_error(path, "true or false", v);
                None
            }
        }
    }

    fn str(&mut self, path: &str) -> Option<&'a str> {
        let v = self.get(path)?;
        match v.as_str() {
            Some(x) => Some(x),
            None => {
                self.type_error(path, "a string", v);
                None
            }
        }
    }

    /// A number or a non-empty array of numbers.
    fn f64_list(&mut self, path: &str) -> Option<Vec<f64>> {
        let v = self.get(path)?;
        if let Some(x) = v.as_f64() {
            return Some(vec![x]);
        }
        match v
            .as_array()
            .map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
        {
            Some(Some(xs)) if !xs.is_empty() => Some(xs),
            _ => {
                self.type_error(path, "a number or a non-empty array of numbers", v);
                None
            }
        }
    }

    fn non_negative_list(&mut self, path: &str) -> Option<Vec<f64>> {
        let xs = self.f64_list(path)?;
        if xs.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            self.errors
                .push(format!("`{path}` entries must be finite and >= 0"));
            return None;
        }
        Some(xs)
    }

    fn noise_levels(&mut self, section: &str) -> Option<NoiseLevels> {
        let (s, p, b) = (
            format!("{section}.sigma2"),
            format!("{section}.power_density"),
            format!("{section}.bandwidth"),
        );
        match (self.has(&s), self.has(&p), self.has(&b)) {
            (true, false, false) => Some(NoiseLevels {
                sigma2: self.non_negative_list(&s)?,
                power_density: None,
                bandwidth: None,
            }),
            (true, _, _) => {
                self.errors.push(format!(
                    "`{s}` and (`{p}`, `{b}`) are mutually exclusive: P̄/V = σ²Δω, give one form"
                ));
                None
            }
            (false, true, true) => {
                let power = self.non_negative_list(&p);
                let bw = self.f64(&b);
                let bw = self.positive(&b, bw)?;
                let power = power?;
                Some(NoiseLevels {
                    sigma2: power.iter().map(|x| x / bw).collect(),
                    power_density: Some(power),
                    bandwidth: Some(bw),
                })
            }
            (false, true, false) => {
                self.missing(&b);
                None
            }
            (false, false, true) => {
                self.missing(&p);
                None
            }
            (false, false, false) => {
                self.missing(&s);
                None
            }
        }
    }

    /// `(|B|, θ₀)` from `magnitude` + `cone_angle` or from the rotating-frame pair `(b0, b_rf)`.
    fn field_geometry(&mut self, section: &str) -> Option<(f64, f64)> {
        let names = ["magnitude", "cone_angle", "b0", "b_rf"].map(|k| format!("{section}.{k}"));
        let [m, c, b0, brf] = names.each_ref().map(|n| self.has(n));
        if (m || c) && (b0 || brf) {
            self.errors.push(format!(
                "`{}`/`{}` and (`{}`, `{}`) are mutually exclusive",
                names[0], names[1], names[2], names[3]
            ));
            return None;
        }
        if b0 || brf {
            let b0 = self.req_f64(&names[2]);
            let brf = self.req_f64(&names[3]);
            let (b0, brf) = (b0?, brf?);
            let along = b0 - brf;
            let magnitude = brf.hypot(along);
            if !(magnitude > 0.0) {
                self.errors.push(format!(
                    "`{}` and `{}` give a vanishing effective field",
                    names[2], names[3]
                ));
                return None;
            }
            return Some((magnitude, brf.abs().atan2(along)));
        }
        let mag = self.req_f64(&names[0]);
        let mag = self.positive(&names[0], mag);
        let theta = self.req_f64(&names[1]);
        let theta = match theta {
            Some(t) if (0.0..=PI).contains(&t) => Some(t),
            Some(t) => {
                self.errors
                    .push(format!("`{}` must lie in [0, π], got {t}", names[1]));
                None
            }
            None => None,
        };
        Some((mag?, theta?))
    }

    fn field(&mut self, with_cycles: bool) -> Option<FieldParams> {
        let gamma = self.req_f64("field.gamma");
        let gamma = self.positive("field.gamma", gamma);
        let geometry = self.field_geometry("field");
        let period = self.req_f64("field.period");
        let period = self.positive("field.period", period);
        let cycles = if with_cycles {
            self.u64("field.cycles").unwrap_or(1)
        } else {
            1
        };
        if cycles == 0 || cycles > u32::MAX as u64 {
            self.errors.push(format!(
                "`field.cycles` must be in 1..={}, got {cycles}",
                u32::MAX
            ));
        }
        let (magnitude, cone_angle) = geometry?;
        Some(FieldParams {
            gamma: gamma?,
            magnitude,
            cone_angle,
            period: period?,
            cycles: cycles as u32,
        })
    }

    fn coupling(&mut self, path: &str) -> Option<NoiseCoupling> {
        let Some(v) = self.get(path) else {
            return Some(NoiseCoupling::rf_x());
        };
        if let Some(s) = v.as_str() {
            return match s {
                "rf_x" => Some(NoiseCoupling::rf_x()),
                "isotropic" => Some(NoiseCoupling::Isotropic),
                other => {
                    self.errors.push(format!(
                        "`{path}` must be \"rf_x\", \"isotropic\" or [x, y, z], got \"{other}\""
                    ));
                    None
                }
            };
        }
        let axis = v.as_array().and_then(|a| {
            let xs: Option<Vec<f64>> = a.iter().map(Value::as_f64).collect();
            xs.filter(|x| x.len() == 3)
        });
        match axis {
            Some(a) => {
                let c = NoiseCoupling::Axis([a[0], a[1], a[2]]);
                match c.validate() {
                    Ok(()) => Some(c),
                    Err(e) => {
                        self.errors.push(format!("`{path}`: {e}"));
                        None
                    }
                }
            }
            None => {
                self.type_error(path, "\"rf_x\", \"isotropic\" or [x, y, z]", v);
                None
            }
        }
    }

    fn tau_c(&mut self, path: &str) -> Option<f64> {
        let t = self.req_f64(path);
        self.positive(path, t)
    }
}

fn check_unknown_keys(
    root: &Map<String, Value>,
    experiment: Option<Experiment>,
    errors: &mut Vec<String>,
) {
    let sections = experiment.map(|e| e.sections()).unwrap_or(&[]);
    for (key, value) in root {
        if key == "output" {
            match value.as_object() {
                Some(m) => {
                    for k in m.keys().filter(|k| !OUTPUT_KEYS.contains(&k.as_str())) {
                        errors.push(format!("unknown key `output.{k}`"));
                    }
                }
                None => errors.push("`output` must be a table".into()),
            }
        } else if TOP_LEVEL.contains(&key.as_str()) {
            continue;
        } else if let Some((_, allowed)) = sections.iter().find(|(s, _)| s == key) {
            match value.as_object() {
                Some(m) => {
                    for k in m.keys().filter(|k| !allowed.contains(&k.as_str())) {
                        errors.push(format!("unknown key `{key}.{k}`"));
                    }
                }
                None => errors.push(format!("`{key}` must be a table")),
            }
        } else if experiment.is_some() {
            errors.push(format!("unknown key `{key}`"));
        }
    }
}

/// Validates a parsed tree, collecting every error.
pub fn validate_tree(tree: &Value) -> Result<ExperimentConfig, Vec<String>> {
    let Some(root) = tree.as_object() else {
        return Err(vec!["configuration must be a table".into()]);
    };
    let mut errors = Vec::new();
    let experiment = match root.get("experiment") {
        None => {
            errors.push("experiment missing: set `experiment` to one of noise-validate, agp-dephase, gate-fidelity, shor-scan".into());
            None
        }
        Some(v) => match v.as_str().and_then(Experiment::parse) {
            Some(e) => Some(e),
            None => {
                errors.push(format!(
                    "unknown experiment {v}: expected one of noise-validate, agp-dephase, gate-fidelity, shor-scan"
                ));
                None
            }
        },
    };
    check_unknown_keys(root, experiment, &mut errors);
    let Some(experiment) = experiment else {
        return Err(errors);
    };

    let mut r = Reader {
        root,
        experiment,
        errors,
    };
    let master_seed = r.u64("master_seed").unwrap_or(0);
    let realizations = r.u64("realizations").map(|n| n as usize);
    if matches!(realizations, Some(n) if n < 2) {
        r.errors.push("`realizations` must be >= 2".into());
    }
    let threads = r.u64("threads").map(|n| n as usize);
    if threads == Some(0) {
        r.errors.push("`threads` must be >= 1".into());
    }
    let strict_adiabatic = r.bool("strict_adiabatic").unwrap_or(false);
    let output_path = r.str("output.path").map(PathBuf::from);
    let format = match r.str("output.format") {
        None => Format::Csv,
        Some(s) => Format::parse(s).unwrap_or_else(|| {
            r.errors.push(format!(
                "`output.format` must be \"csv\" or \"json\", got \"{s}\""
            ));
            Format::Csv
        }),
    };

    let mut warnings = Vec::new();
    let mut slow_noise = false;
    let mut note_slow = |tau: f64, period: f64, warnings: &mut Vec<String>| {
        if tau >= period / 10.0 {
            slow_noise = true;
            warnings.push(format!(
                "τc = {tau} is not below T/10 = {}: the adiabatic overlap estimates assume τc ≪ T",
                period / 10.0
            ));
        }
    };

    let params = match experiment {
        Experiment::NoiseValidate => {
            let levels = r.noise_levels("noise");
            if matches!(&levels, Some(l) if l.sigma2.len() != 1) {
                r.errors
                    .push("noise-validate takes a single noise level".into());
            }
            let tau_c = r.tau_c("noise.tau_c");
            let dimension = r.u64("noise.dimension").unwrap_or(1) as usize;
            if !matches!(dimension, 1 | 3) {
                r.errors
                    .push(format!("`noise.dimension` must be 1 or 3, got {dimension}"));
            }
            let duration = r.req_f64("sampling.duration");
            let duration = r.positive("sampling.duration", duration);
            let dt = r.f64("sampling.dt");
            let dt = if dt.is_some() {
                r.positive("sampling.dt", dt)
            } else {
                tau_c.map(|t| t / 10.0)
            };
            let lags = match r.non_negative_list("sampling.lags") {
                Some(l) => Some(l),
                None if r.has("sampling.lags") => None,
                None => tau_c.map(|t| (0..4).map(|i| i as f64 * t).collect()),
            };
            match (levels, tau_c, duration, dt, lags) {
                (Some(levels), Some(tau_c), Some(duration), Some(dt), Some(lags)) => {
                    Some(Params::NoiseValidate(NoiseValidateParams {
                        levels,
                        tau_c,
                        dimension,
                        duration,
                        dt,
                        lags,
                    }))
                }
                _ => None,
            }
        }
        Experiment::AgpDephase => {
            let field = r.field(true);
            let levels = r.noise_levels("noise");
            let tau_c = r.tau_c("noise.tau_c");
            let coupling = r.coupling("noise.coupling");
            let engine = match r.str("engine.kind") {
                None | Some("analytic") => Some(Engine::AnalyticPhase),
                Some("exact") => Some(Engine::ExactPropagation),
                Some(other) => {
                    r.errors.push(format!(
                        "`engine.kind` must be \"analytic\" or \"exact\", got \"{other}\""
                    ));
                    None
                }
            };
            let noise_dt = r.f64("engine.noise_dt");
            let noise_dt = if noise_dt.is_some() {
                r.positive("engine.noise_dt", noise_dt)
            } else {
                None
            };
            let slices = r.u64("engine.slices").map(|s| s as usize);
            if slices == Some(0) {
                r.errors.push("`engine.slices` must be >= 1".into());
            }
            if let (Some(f), Some(t)) = (field, tau_c) {
                note_slow(t, f.period, &mut warnings);
            }
            match (field, levels, tau_c, coupling, engine) {
                (Some(field), Some(levels), Some(tau_c), Some(coupling), Some(engine)) => {
                    Some(Params::AgpDephase(AgpParams {
                        field,
                        levels,
                        tau_c,
                        coupling,
                        engine,
                        noise_dt,
                        slices,
                    }))
                }
                _ => None,
            }
        }
        Experiment::GateFidelity => {
            let field = r.field(false);
            let phase = r.req_f64("gate.conditional_phase");
            let levels = r.noise_levels("noise");
            let tau_c = r.tau_c("noise.tau_c");
            let coupling = r.coupling("noise.coupling");
            let noise_dt = r.f64("engine.noise_dt");
            let noise_dt = if noise_dt.is_some() {
                r.positive("engine.noise_dt", noise_dt)
            } else {
                None
            };
            if let (Some(f), Some(t)) = (field, tau_c) {
                note_slow(t, f.period, &mut warnings);
            }
            match (field, phase, levels, tau_c, coupling) {
                (
                    Some(field),
                    Some(conditional_phase),
                    Some(levels),
                    Some(tau_c),
                    Some(coupling),
                ) => Some(Params::GateFidelity(GateParams {
                    field,
                    conditional_phase,
                    levels,
                    tau_c,
                    coupling,
                    noise_dt,
                })),
                _ => None,
            }
        }
        Experiment::ShorScan => {
            let instances = match r.get("shor.instances") {
                None => {
                    r.missing("shor.instances");
                    None
                }
                Some(v) => {
                    let parsed = v.as_array().and_then(|a| {
                        a.iter()
                            .map(|p| match p.as_array().map(|x| x.as_slice()) {
                                Some([n, y]) => Some((n.as_u64()?, y.as_u64()?)),
                                _ => None,
                            })
                            .collect::<Option<Vec<_>>>()
                    });
                    match parsed {
                        Some(p) if !p.is_empty() => Some(p),
                        _ => {
                            r.type_error("shor.instances", "a non-empty array of [N, y] pairs", v);
                            None
                        }
                    }
                }
            };
            let offset = r.u64("shor.offset").unwrap_or(0);
            let mode = match r.str("shor.mode") {
                None | Some("general") => Some(AmplitudeMode::General),
                Some("exact_divisor") => Some(AmplitudeMode::ExactDivisor),
                Some(other) => {
                    r.errors.push(format!(
                        "`shor.mode` must be \"general\" or \"exact_divisor\", got \"{other}\""
                    ));
                    None
                }
            };
            let gate_given = root.contains_key("gate");
            let variance = match (r.has("shor.variance"), gate_given) {
                (true, true) => {
                    r.errors
                        .push("`shor.variance` and the `gate` table are mutually exclusive".into());
                    None
                }
                (true, false) => r
                    .non_negative_list("shor.variance")
                    .map(ShorVariance::Direct),
                (false, true) => {
                    let gamma = r.req_f64("gate.gamma");
                    let gamma = r.positive("gate.gamma", gamma);
                    let levels = r.noise_levels("gate");
                    let tau_c = r.tau_c("gate.tau_c");
                    let period = r.req_f64("gate.period");
                    let period = r.positive("gate.period", period);
                    let cone_angle = r.req_f64("gate.cone_angle");
                    let kappa = r.f64("gate.kappa").unwrap_or(DEFAULT_OVERLAP_CONSTANT);
                    if let (Some(t), Some(p)) = (tau_c, period) {
                        note_slow(t, p, &mut warnings);
                    }
                    match (gamma, levels, tau_c, period, cone_angle) {
                        (
                            Some(gamma),
                            Some(levels),
                            Some(tau_c),
                            Some(period),
                            Some(cone_angle),
                        ) => Some(ShorVariance::FromGate(ShorGateNoise {
                            gamma,
                            levels,
                            tau_c,
                            period,
                            cone_angle,
                            kappa,
                        })),
                        _ => None,
                    }
                }
                (false, false) => {
                    r.missing("shor.variance");
                    None
                }
            };
            match (instances, mode, variance) {
                (Some(instances), Some(mode), Some(variance)) => {
                    Some(Params::ShorScan(ShorParams {
                        instances,
                        offset,
                        mode,
                        variance,
                    }))
                }
                _ => None,
            }
        }
    };

    if !r.errors.is_empty() {
        return Err(r.errors);
    }
    Ok(ExperimentConfig {
        experiment,
        master_seed,
        realizations,
        threads,
        strict_adiabatic,
        output_path,
        format,
        params: params.expect("no errors implies parameters"),
        warnings,
        slow_noise,
        tree: tree.clone(),
    })
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict_adiabatic: bool,
}

/// Writes overrides into the tree so the manifest echoes what actually ran.
pub fn apply_overrides(tree: &mut Value, experiment: Experiment, o: &Overrides) -> CliResult<()> {
    let Value::Object(root) = tree else {
        return Err(CliError::Config(vec![
            "configuration must be a table".into()
        ]));
    };
    match root.get("experiment").and_then(Value::as_str) {
        None => {
            root.insert("experiment".into(), Value::from(experiment.name()));
        }
        Some(e) if e != experiment.name() => {
            return Err(CliError::Config(vec![format!(
                "config selects experiment `{e}` but the subcommand is `{experiment}`"
            )]));
        }
        Some(_) => {}
    }
    if let Some(s) = o.seed {
        root.insert("master_seed".into(), Value::from(s));
    }
    if let Some(n) = o.realizations {
        root.insert("realizations".into(), Value::from(n as u64));
    }
    if let Some(n) = o.threads {
        root.insert("threads".into(), Value::from(n as u64));
    }
    if o.strict_adiabatic {
        root.insert("strict_adiabatic".into(), Value::Bool(true));
    }
    if o.out.is_some() || o.format.is_some() {
        let out = root
            .entry("output")
            .or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(m) = out {
            if let Some(p) = &o.out {
                m.insert("path".into(), Value::from(p.to_string_lossy().into_owned()));
            }
            if let Some(f) = o.format {
                m.insert("format".into(), Value::from(f.extension()));
            }
        }
    }
    Ok(())
}
