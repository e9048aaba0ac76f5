//! Seeded data-generating processes for the null designs and the
//! heterogeneous-effect alternative.
//!
//! Common to all designs: `X ~ N(0, 1)`, `D ~ Bernoulli(0.5)`, `Z_1 = 1`,
//! `Y = 1 + 2X + (1 + delta lambda) D + N(0, 1)`, with `delta = 0` under
//! the null and `delta ~ Bernoulli(logistic(Z'gamma))` under the
//! alternative. The settings differ in how `Z_2..Z_d` are drawn.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{logistic, Dataset};
use crate::numerics::cholesky_lower;
use crate::rng::{stream_id, substream, StreamRng};
use crate::scalar::Scalar;

/// Skew-normal shape used in Setting IV.
pub const SKEW_SHAPE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    /// Independent standard normals.
    I,
    /// Correlated normals with a random unit-diagonal covariance.
    II,
    /// Rademacher signs.
    III,
    /// Standardized skew-normal, shape 4.
    IV,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::I, Setting::II, Setting::III, Setting::IV];

    pub fn index(self) -> u64 {
        match self {
            Setting::I => 1,
            Setting::II => 2,
            Setting::III => 3,
            Setting::IV => 4,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::I => "I",
            Setting::II => "II",
            Setting::III => "III",
            Setting::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Setting::I),
            "II" | "2" => Ok(Setting::II),
            "III" | "3" => Ok(Setting::III),
            "IV" | "4" => Ok(Setting::IV),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

/// One data-generating configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub setting: Setting,
    pub n: usize,
    /// Number of Z columns including the intercept.
    pub d: usize,
    pub alternative: bool,
    pub lambda_true: f64,
    /// Length `d`; `None` means all ones.
    pub gamma_true: Option<Vec<f64>>,
    pub seed: u64,
    /// Replication stream under `seed`.
    pub stream: u64,
    /// Seed for Setting II's covariance matrix.
    pub sigma_seed: u64,
}

impl DgpSpec {
    pub fn null(setting: Setting, n: usize, d: usize, seed: u64) -> Self {
        Self {
            setting,
            n,
            d,
            alternative: false,
            lambda_true: 1.0,
            gamma_true: None,
            seed,
            stream: 0,
            sigma_seed: seed,
        }
    }

    pub fn alternative(setting: Setting, n: usize, d: usize, seed: u64) -> Self {
        Self {
            alternative: true,
            ..Self::null(setting, n, d, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d < 2 {
            return Err(Error::Config(format!("need n >= 2 and d >= 2, got n={}, d={}", self.n, self.d)));
        }
        if !(self.lambda_true >= 0.0) || !self.lambda_true.is_finite() {
            return Err(Error::Config("lambda_true must be finite and >= 0".into()));
        }
        if let Some(g) = &self.gamma_true {
            if g.len() != self.d {
                return Err(Error::Config(format!("gamma_true has {} entries, expected {}", g.len(), self.d)));
            }
        }
        Ok(())
    }
}

/// Standardized skew-normal draw with shape 4 (mean 0, variance 1).
pub fn sample_skewnormal_std<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let delta = SKEW_SHAPE / (1.0 + SKEW_SHAPE * SKEW_SHAPE).sqrt();
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let raw = delta * z0.abs() + (1.0 - delta * delta).sqrt() * z1;
    let mean = delta * (2.0 / std::f64::consts::PI).sqrt();
    let sd = (1.0 - 2.0 * delta * delta / std::f64::consts::PI).sqrt();
    (raw - mean) / sd
}

/// Random `(d-1) x (d-1)` correlation matrix `L L'` rescaled to unit
/// diagonal, where `L` is lower triangular with `U(-1, 1)` off-diagonal and
/// `U(0.5, 1.5)` diagonal entries. Row-major.
pub fn gen_sigma_cholesky(d: usize, seed: u64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::Config(format!("need d >= 2, got {d}")));
    }
    let k = d - 1;
    let mut rng = substream(seed, stream_id(&[0x0051_674A, d as u64]));
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..i {
            l[i * k + j] = rng.gen_range(-1.0..1.0);
        }
        l[i * k + i] = rng.gen_range(0.5..1.5);
    }
    let mut sigma = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|p| l[i * k + p] * l[j * k + p]).sum();
            sigma[i * k + j] = v;
            sigma[j * k + i] = v;
        }
    }
    let scale: Vec<f64> = (0..k).map(|i| sigma[i * k + i].sqrt()).collect();
    for i in 0..k {
        for j in 0..k {
            sigma[i * k + j] /= scale[i] * scale[j];
        }
        sigma[i * k + i] = 1.0;
    }
    Ok(sigma)
}

enum ZSampler {
    Independent(Setting),
    Correlated { chol: Vec<f64>, k: usize },
}

impl ZSampler {
    fn new(spec: &DgpSpec) -> Result<Self> {
        if spec.setting != Setting::II {
            return Ok(ZSampler::Independent(spec.setting));
        }
        let k = spec.d - 1;
        let sigma = gen_sigma_cholesky(spec.d, spec.sigma_seed)?;
        let chol = cholesky_lower(&sigma, k)
            .ok_or_else(|| Error::DegenerateDesign("generated covariance is not positive definite".into()))?;
        Ok(ZSampler::Correlated { chol, k })
    }

    fn fill(&self, rng: &mut StreamRng, out: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            ZSampler::Independent(setting) => {
                for v in out.iter_mut() {
                    *v = match setting {
                        Setting::III => {
                            if rng.gen_bool(0.5) {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        Setting::IV => sample_skewnormal_std(rng),
                        _ => rng.sample(StandardNormal),
                    };
                }
            }
            ZSampler::Correlated { chol, k } => {
                scratch.clear();
                scratch.extend((0..*k).map(|_| rng.sample::<f64, _>(StandardNormal)));
                for i in 0..*k {
                    out[i] = (0..=i).map(|p| chol[i * k + p] * scratch[p]).sum();
                }
            }
        }
    }
}

/// Draws one dataset. `(X, D, noise)` and `(Z, delta)` come from two
/// separate substreams, so null datasets that differ only in `d` share
/// their outcome and confounders.
pub fn gen_dataset<T: Scalar>(spec: &DgpSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut main = substream(spec.seed, stream_id(&[spec.stream, 0]));
    let mut zrng = substream(spec.seed, stream_id(&[spec.stream, 1]));
    let sampler = ZSampler::new(spec)?;
    let gamma = spec.gamma_true.clone().unwrap_or_else(|| vec![1.0; d]);

    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(2 * n);
    let mut dv = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * d);
    let mut zrow = vec![0.0; d];
    let mut scratch = Vec::new();
    for _ in 0..n {
        let xi: f64 = main.sample(StandardNormal);
        let di = if main.gen_bool(0.5) { 1.0 } else { 0.0 };
        let eps: f64 = main.sample(StandardNormal);

        zrow[0] = 1.0;
        sampler.fill(&mut zrng, &mut zrow[1..], &mut scratch);
        let shift = if spec.alternative {
            let zg: f64 = zrow.iter().zip(&gamma).map(|(a, b)| a * b).sum();
            let u: f64 = zrng.gen();
            if u < logistic(zg) {
                spec.lambda_true
            } else {
                0.0
            }
        } else {
            0.0
        };

        y.push(T::c(1.0 + 2.0 * xi + (1.0 + shift) * di + eps));
        x.push(T::one());
        x.push(T::c(xi));
        dv.push(T::c(di));
        z.extend(zrow.iter().map(|&v| T::c(v)));
    }
    Dataset::new(y, x, 2, dv, z, d)
}
