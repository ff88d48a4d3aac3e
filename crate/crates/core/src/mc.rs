//! Seed splitting, deterministic parallel maps and the small amount of sample
//! statistics the Monte Carlo layers need.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for realization `index` of an ensemble. Depends only on the pair, so
/// realizations can be generated in any order.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Maps `f` over `0..n` in parallel and returns results in index order.
pub fn ordered_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Pairwise summation; the tree shape depends only on the length, so the result
/// is independent of how the inputs were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                standard_error: f64::NAN,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return Estimate {
                mean,
                standard_error: 0.0,
            };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Estimate {
            mean,
            standard_error: (var / n as f64).sqrt(),
        }
    }

    /// |mean - target| measured in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.standard_error == 0.0 {
            return if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            };
        }
        (self.mean - target).abs() / self.standard_error
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target) <= n_se
    }
}

/// Mean of complex samples. `standard_error` is the error of the modulus of
/// the mean, taken as the spread of the samples projected on the mean's
/// direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub standard_error: f64,
    /// Total error `sqrt((var re + var im)/n)`.
    pub entry_error: f64,
}

impl ComplexEstimate {
    pub fn from_samples(zs: &[Complex64]) -> ComplexEstimate {
        let n = zs.len();
        let mean = pairwise_sum_complex(zs) / n as f64;
        if n < 2 {
            return ComplexEstimate {
                mean,
                standard_error: 0.0,
                entry_error: 0.0,
            };
        }
        let dir = if mean.norm() > 0.0 {
            mean / mean.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let par: Vec<f64> = zs.iter().map(|z| (z * dir.conj()).re).collect();
        let par = Estimate::from_samples(&par);
        let tot: Vec<f64> = zs.iter().map(|z| (z - mean).norm_sqr()).collect();
        let tot = pairwise_sum(&tot) / (n - 1) as f64;
        ComplexEstimate {
            mean,
            standard_error: par.standard_error,
            entry_error: (tot / n as f64).sqrt(),
        }
    }

    pub fn modulus(&self) -> Estimate {
        Estimate {
            mean: self.mean.norm(),
            standard_error: self.standard_error,
        }
    }
}

/// Sample skewness and excess kurtosis with their large-sample standard errors
/// under normality (`sqrt(6/n)`, `sqrt(24/n)`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ShapeStatistics {
    pub mean: Estimate,
    pub variance: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
}

impl ShapeStatistics {
    pub fn from_samples(xs: &[f64]) -> ShapeStatistics {
        let n = xs.len() as f64;
        let mean = Estimate::from_samples(xs);
        let m = mean.mean;
        let pow =
            |p: i32| pairwise_sum(&xs.iter().map(|x| (x - m).powi(p)).collect::<Vec<_>>()) / n;
        let m2 = pow(2);
        let m3 = pow(3);
        let m4 = pow(4);
        ShapeStatistics {
            mean,
            variance: m2 * n / (n - 1.0),
            skewness: m3 / m2.powf(1.5),
            skewness_se: (6.0 / n).sqrt(),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
            kurtosis_se: (24.0 / n).sqrt(),
        }
    }

    pub fn looks_gaussian(&self, n_se: f64) -> bool {
        self.skewness.abs() <= n_se * self.skewness_se
            && self.excess_kurtosis.abs() <= n_se * self.kurtosis_se
    }
}
