//! Stationary, zero-mean, exponentially correlated control-field noise.
//!
//! Paths are generated with the exact Ornstein-Uhlenbeck recursion
//! `x[n+1] = a x[n] + σ sqrt(1 - a²) ξ[n]`, `a = exp(-Δt/τc)`, started from the
//! stationary marginal, so every sample has variance σ² and every pair of
//! samples has covariance `σ² exp(-|Δt|/τc)` with no discretization bias.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{pairwise_sum, rng_from_seed, Estimate};

/// Required ratio between the correlation time and the sampling step.
pub const MIN_SAMPLES_PER_CORRELATION_TIME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `f(τ) = exp(-|τ|/τc)`
    #[default]
    Exponential,
}

impl Kernel {
    pub fn value(&self, lag: f64, correlation_time: f64) -> f64 {
        match self {
            Kernel::Exponential => (-lag.abs() / correlation_time).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// σ², per component.
    pub variance: f64,
    /// τc in seconds.
    pub correlation_time: f64,
    /// 1 for scalar (e.g. rf power) noise, 3 for isotropic vector noise.
    pub dimension: usize,
    #[serde(default)]
    pub kernel: Kernel,
}

impl NoiseSpec {
    pub fn new(variance: f64, correlation_time: f64, dimension: usize) -> Result<Self> {
        let spec = NoiseSpec {
            variance,
            correlation_time,
            dimension,
            kernel: Kernel::Exponential,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {}",
                self.variance
            )));
        }
        if !(self.correlation_time > 0.0 && self.correlation_time.is_finite()) {
            return Err(Error::invalid(format!(
                "correlation time must be > 0, got {}",
                self.correlation_time
            )));
        }
        if self.dimension != 1 && self.dimension != 3 {
            return Err(Error::invalid(format!(
                "noise dimension must be 1 or 3, got {}",
                self.dimension
            )));
        }
        Ok(())
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// σ² f(τ)
    pub fn autocovariance(&self, lag: f64) -> f64 {
        self.variance * self.kernel.value(lag, self.correlation_time)
    }

    pub fn max_step(&self) -> f64 {
        self.correlation_time / MIN_SAMPLES_PER_CORRELATION_TIME
    }
}

/// One noise realization on the grid `t_n = n·dt`, `n = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    spec: NoiseSpec,
    dt: f64,
    len: usize,
    /// Row-major, `dimension` components per grid point.
    samples: Vec<f64>,
    seed: u64,
}

/// Exact OU path covering `[0, duration]`.
pub fn make_noise_path(spec: &NoiseSpec, duration: f64, dt: f64, seed: u64) -> Result<NoisePath> {
    spec.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be > 0, got {dt}")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    if duration < dt * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "duration {duration} shorter than one step {dt}"
        )));
    }
    let bound = spec.max_step();
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Resolution {
            what: "noise time step (must be <= correlation_time/10)".into(),
            value: dt,
            bound,
        });
    }

    let steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let len = steps + 1;
    let dim = spec.dimension;
    let sigma = spec.std_dev();
    let decay = (-dt / spec.correlation_time).exp();
    let kick = sigma * (1.0 - decay * decay).sqrt();

    let mut rng = rng_from_seed(seed);
    let mut samples = vec![0.0; len * dim];
    for c in 0..dim {
        let xi: f64 = rng.sample(StandardNormal);
        samples[c] = sigma * xi;
    }
    for n in 1..len {
        for c in 0..dim {
            let xi: f64 = rng.sample(StandardNormal);
            samples[n * dim + c] = decay * samples[(n - 1) * dim + c] + kick * xi;
        }
    }
    Ok(NoisePath {
        spec: *spec,
        dt,
        len,
        samples,
        seed,
    })
}

impl NoisePath {
    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn duration(&self) -> f64 {
        (self.len - 1) as f64 * self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |n| self.time(n))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let d = self.spec.dimension;
        &self.samples[n * d..(n + 1) * d]
    }

    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.spec.dimension;
        self.samples.iter().skip(c).step_by(d).copied()
    }

    /// Linear interpolation between grid samples, clamped to the covered range.
    pub fn value(&self, t: f64, c: usize) -> f64 {
        let d = self.spec.dimension;
        let x = (t / self.dt).max(0.0);
        let n = (x.floor() as usize).min(self.len - 1);
        if n + 1 >= self.len {
            return self.samples[(self.len - 1) * d + c];
        }
        let w = x - n as f64;
        self.samples[n * d + c] * (1.0 - w) + self.samples[(n + 1) * d + c] * w
    }

    /// Noise field vector at `t`. A scalar path is laid along `axis`.
    pub fn field(&self, t: f64, axis: &[f64; 3]) -> [f64; 3] {
        if self.spec.dimension == 1 {
            let x = self.value(t, 0);
            [x * axis[0], x * axis[1], x * axis[2]]
        } else {
            [self.value(t, 0), self.value(t, 1), self.value(t, 2)]
        }
    }

    /// Same path with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> NoisePath {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|x| *x *= factor);
        out.spec.variance *= factor * factor;
        out
    }

    /// The window `[start, start + duration]` re-based to start at t = 0.
    /// `start` must lie on the grid.
    pub fn window(&self, start: f64, duration: f64) -> Result<NoisePath> {
        let first = (start / self.dt).round();
        if (first * self.dt - start).abs() > 1e-9 * self.dt.max(start.abs()) || first < 0.0 {
            return Err(Error::invalid(format!(
                "window start {start} is not on the noise grid"
            )));
        }
        let first = first as usize;
        let steps = (duration / self.dt - 1e-9).ceil().max(1.0) as usize;
        if first + steps > self.len - 1 {
            return Err(Error::invalid(format!(
                "noise path of duration {} does not cover [{start}, {}]",
                self.duration(),
                start + duration
            )));
        }
        let d = self.spec.dimension;
        Ok(NoisePath {
            spec: self.spec,
            dt: self.dt,
            len: steps + 1,
            samples: self.samples[first * d..(first + steps + 1) * d].to_vec(),
            seed: self.seed,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.spec.dimension;
        write!(out, "t_s")?;
        for c in 0..d {
            write!(out, ",b{c}_field")?;
        }
        writeln!(out)?;
        for n in 0..self.len {
            write!(out, "{}", self.time(n))?;
            for x in self.sample(n) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AutocorrelationEstimate {
    pub lag: f64,
    pub estimate: f64,
    pub standard_error: f64,
}

/// Number of batches a single path is split into when there is no ensemble to
/// estimate the spread from.
const SINGLE_PATH_BATCHES: usize = 64;

fn check_ensemble(paths: &[NoisePath], lags: &[f64]) -> Result<Vec<usize>> {
    let first = paths
        .first()
        .ok_or_else(|| Error::invalid("no paths supplied"))?;
    for p in paths {
        if p.dt != first.dt || p.len != first.len || p.spec != first.spec {
            return Err(Error::invalid("paths do not share a grid and spec"));
        }
    }
    lags.iter()
        .map(|&lag| {
            let m = (lag / first.dt).round();
            if lag < 0.0 || (m * first.dt - lag).abs() > 1e-9 * first.dt.max(lag) {
                return Err(Error::invalid(format!(
                    "lag {lag} is not a multiple of dt {}",
                    first.dt
                )));
            }
            let m = m as usize;
            if m >= first.len {
                return Err(Error::invalid(format!(
                    "lag {lag} exceeds the path duration"
                )));
            }
            Ok(m)
        })
        .collect()
}

/// Known-mean (zero) lagged product average over `[from, to)` of the lag origin.
fn lagged_mean(path: &NoisePath, m: usize, from: usize, to: usize) -> f64 {
    let d = path.spec.dimension;
    let terms: Vec<f64> = (from..to)
        .map(|n| {
            let a = path.sample(n);
            let b = path.sample(n + m);
            (0..d).map(|c| a[c] * b[c]).sum::<f64>() / d as f64
        })
        .collect();
    pairwise_sum(&terms) / terms.len() as f64
}

/// Per-unit estimates: one per path, or per batch when only one path is given.
fn unit_estimates(paths: &[NoisePath], m: usize) -> Vec<f64> {
    let usable = paths[0].len - m;
    if paths.len() >= 2 {
        return paths.iter().map(|p| lagged_mean(p, m, 0, usable)).collect();
    }
    let batches = SINGLE_PATH_BATCHES.min(usable).max(1);
    let size = usable / batches;
    (0..batches)
        .map(|b| {
            let to = if b + 1 == batches {
                usable
            } else {
                (b + 1) * size
            };
            lagged_mean(&paths[0], m, b * size, to)
        })
        .collect()
}

/// Estimates the autocovariance `⟨B(t)B(t+τ)⟩` (component-averaged, mean known to
/// be zero) averaged over paths and time, with a standard error from the
/// spread across paths (or across batches of a single path).
pub fn estimate_autocorrelation(
    paths: &[NoisePath],
    lags: &[f64],
) -> Result<Vec<AutocorrelationEstimate>> {
    let idx = check_ensemble(paths, lags)?;
    Ok(idx
        .iter()
        .zip(lags)
        .map(|(&m, &lag)| {
            let e = Estimate::from_samples(&unit_estimates(paths, m));
            AutocorrelationEstimate {
                lag,
                estimate: e.mean,
                standard_error: e.standard_error,
            }
        })
        .collect())
}

/// Autocorrelation normalized by the lag-0 value, ratio formed per unit.
pub fn estimate_normalized_autocorrelation(
    paths: &[NoisePath],
    lags: &[f64],
) -> Result<Vec<AutocorrelationEstimate>> {
    let idx = check_ensemble(paths, lags)?;
    let zero = unit_estimates(paths, 0);
    Ok(idx
        .iter()
        .zip(lags)
        .map(|(&m, &lag)| {
            let ratios: Vec<f64> = unit_estimates(paths, m)
                .iter()
                .zip(&zero)
                .map(|(a, z)| if *z == 0.0 { 0.0 } else { a / z })
                .collect();
            let e = Estimate::from_samples(&ratios);
            AutocorrelationEstimate {
                lag,
                estimate: e.mean,
                standard_error: e.standard_error,
            }
        })
        .collect())
}

/// Sample variance about the known zero mean; identical to the lag-0
/// autocorrelation estimate.
pub fn sample_variance(paths: &[NoisePath]) -> Result<AutocorrelationEstimate> {
    Ok(estimate_autocorrelation(paths, &[0.0])?[0])
}

/// Time-and-ensemble mean of component `c` with its standard error.
pub fn sample_mean(paths: &[NoisePath], c: usize) -> Estimate {
    let per_unit: Vec<f64> = if paths.len() >= 2 {
        paths
            .iter()
            .map(|p| p.component(c).sum::<f64>() / p.len as f64)
            .collect()
    } else {
        let xs: Vec<f64> = paths[0].component(c).collect();
        let size = (xs.len() / SINGLE_PATH_BATCHES).max(1);
        xs.chunks(size)
            .map(|ch| ch.iter().sum::<f64>() / ch.len() as f64)
            .collect()
    };
    Estimate::from_samples(&per_unit)
}
