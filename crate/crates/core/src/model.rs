//! Data model and likelihood of the two-component logistic-normal mixture
//!
//! ```text
//! Y = X'alpha + D (beta + delta lambda) + eps,   eps ~ N(0, sigma2)
//! P(delta = 1 | Z) = logistic(Z'gamma)
//! ```

use crate::error::{Error, Result};
use crate::numerics::{dot, l1_norm, softplus, KahanSum};
use crate::scalar::Scalar;

/// `ln(2 pi)`.
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Default floor on the error variance.
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// Default cap on lambda, as a multiple of the sample sd of `y`.
pub const LAMBDA_CAP_SD_MULTIPLE: f64 = 10.0;

/// Observation table `(y, X, D, Z)`.
///
/// `x` and `z` are stored row-major. Column 0 of both is the intercept and
/// must be exactly `1.0` on every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    y: Vec<T>,
    x: Vec<T>,
    d: Vec<T>,
    z: Vec<T>,
    q: usize,
    dz: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset and checks every invariant: shared `n >= 2`,
    /// intercept columns, finite entries and at least two distinct
    /// treatment values.
    pub fn new(y: Vec<T>, x: Vec<T>, q: usize, d: Vec<T>, z: Vec<T>, dz: usize) -> Result<Self> {
        let ds = Self::for_evaluation(y, x, q, d, z, dz)?;
        ds.check_fit_ready()?;
        Ok(ds)
    }

    /// Like [`Dataset::new`] but only checks shape, intercepts and
    /// finiteness. Suitable for evaluating likelihoods on arbitrary row
    /// subsets; the fitting routines re-check the remaining invariants.
    pub fn for_evaluation(
        y: Vec<T>,
        x: Vec<T>,
        q: usize,
        d: Vec<T>,
        z: Vec<T>,
        dz: usize,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        if q == 0 || dz == 0 {
            return Err(Error::Dimension("X and Z need at least the intercept column".into()));
        }
        if x.len() != n * q {
            return Err(Error::Dimension(format!("x has {} entries, expected {}x{}", x.len(), n, q)));
        }
        if z.len() != n * dz {
            return Err(Error::Dimension(format!("z has {} entries, expected {}x{}", z.len(), n, dz)));
        }
        if d.len() != n {
            return Err(Error::Dimension(format!("d has {} entries, expected {}", d.len(), n)));
        }
        let all_finite = y.iter().chain(&x).chain(&d).chain(&z).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        for i in 0..n {
            if x[i * q] != T::one() || z[i * dz] != T::one() {
                return Err(Error::InvalidData(format!("row {i}: intercept column is not 1.0")));
            }
        }
        Ok(Self { y, x, d, z, q, dz })
    }

    /// Builds from per-row vectors. Intercepts must already be present.
    pub fn from_rows(y: Vec<T>, x_rows: &[Vec<T>], d: Vec<T>, z_rows: &[Vec<T>]) -> Result<Self> {
        let q = x_rows.first().map_or(0, Vec::len);
        let dz = z_rows.first().map_or(0, Vec::len);
        if x_rows.iter().any(|r| r.len() != q) || z_rows.iter().any(|r| r.len() != dz) {
            return Err(Error::Dimension("ragged covariate rows".into()));
        }
        if x_rows.len() != y.len() || z_rows.len() != y.len() {
            return Err(Error::Dimension("row counts differ".into()));
        }
        Self::new(y, x_rows.concat(), q, d, z_rows.concat(), dz)
    }

    /// Checks the invariants needed for estimation (`n >= 2`, D nondegenerate).
    pub fn check_fit_ready(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::InvalidData(format!("need n >= 2, got {}", self.n())));
        }
        let d0 = self.d[0];
        if self.d.iter().all(|&v| v == d0) {
            return Err(Error::InvalidData("treatment D takes a single value".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn dz(&self) -> usize {
        self.dz
    }
    pub fn y(&self) -> &[T] {
        &self.y
    }
    pub fn d(&self) -> &[T] {
        &self.d
    }
    /// Row-major `n x q`.
    pub fn x(&self) -> &[T] {
        &self.x
    }
    /// Row-major `n x dz`.
    pub fn z(&self) -> &[T] {
        &self.z
    }
    pub fn x_row(&self, i: usize) -> &[T] {
        &self.x[i * self.q..(i + 1) * self.q]
    }
    pub fn z_row(&self, i: usize) -> &[T] {
        &self.z[i * self.dz..(i + 1) * self.dz]
    }

    /// Sample standard deviation of `y` (divisor `n - 1`).
    pub fn y_sd(&self) -> T {
        crate::numerics::mean_sd(&self.y).1
    }
}

/// Box constraints on `lambda` and `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds<T> {
    pub lambda_max: T,
    pub sigma2_floor: T,
}

impl<T: Scalar> ParamBounds<T> {
    /// `lambda <= 10 sd(y)`, `sigma2 >= 1e-8`.
    pub fn for_dataset(ds: &Dataset<T>) -> Self {
        let sd = ds.y_sd();
        let cap = T::c(LAMBDA_CAP_SD_MULTIPLE) * sd;
        Self {
            lambda_max: if cap > T::zero() { cap } else { T::one() },
            sigma2_floor: T::c(SIGMA2_FLOOR),
        }
    }
}

/// Full parameter of the two-component model.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<T> {
    pub alpha: Vec<T>,
    pub beta: T,
    pub lambda: T,
    pub sigma2: T,
    pub gamma: Vec<T>,
}

impl<T: Scalar> MixtureParams<T> {
    /// Embeds a null fit (`lambda = 0`, `gamma = 0`).
    pub fn from_null(null: &NullParams<T>, dz: usize) -> Self {
        Self {
            alpha: null.alpha.clone(),
            beta: null.beta,
            lambda: T::zero(),
            sigma2: null.sigma2,
            gamma: vec![T::zero(); dz],
        }
    }

    pub fn gamma_l1(&self) -> T {
        l1_norm(&self.gamma)
    }

    pub fn validate(&self, bounds: &ParamBounds<T>) -> Result<()> {
        if !(self.lambda >= T::zero() && self.lambda <= bounds.lambda_max) {
            return Err(Error::InvalidParams(format!(
                "lambda {} outside [0, {}]",
                self.lambda, bounds.lambda_max
            )));
        }
        if !(self.sigma2 >= bounds.sigma2_floor) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParams(format!("sigma2 {} below floor", self.sigma2)));
        }
        let finite = self.alpha.iter().chain(&self.gamma).all(|v| v.is_finite()) && self.beta.is_finite();
        if !finite {
            return Err(Error::InvalidParams("non-finite coefficient".into()));
        }
        Ok(())
    }

    fn check_dims(&self, ds: &Dataset<T>) -> Result<()> {
        if self.alpha.len() != ds.q() || self.gamma.len() != ds.dz() {
            return Err(Error::Dimension(format!(
                "params (q={}, dz={}) vs dataset (q={}, dz={})",
                self.alpha.len(),
                self.gamma.len(),
                ds.q(),
                ds.dz()
            )));
        }
        Ok(())
    }
}

/// MLE of the homogeneous model (`lambda = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NullParams<T> {
    pub alpha: Vec<T>,
    pub beta: T,
    pub sigma2: T,
}

/// Mixing function `exp(t) / (1 + exp(t))`.
#[inline]
pub fn logistic<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// Log density contributions for one row given its linear predictors.
///
/// Returns `(log f, posterior weight of component 1)`. `r0` is the residual
/// under the baseline component, `r1 = r0 - d lambda`, `zg = z'gamma`.
/// Works with the log-odds `t = zg + (r0^2 - r1^2) / (2 sigma2)` of the two
/// weighted kernels, so no raw kernel is ever exponentiated.
#[inline]
pub(crate) fn row_mix<T: Scalar>(r0: T, r1: T, zg: T, sigma2: T) -> (T, T) {
    let half = T::c(0.5);
    let t = zg + half * (r0 * r0 - r1 * r1) / sigma2;
    let k0 = -softplus(zg) - half * r0 * r0 / sigma2;
    let e = (-t.abs()).exp();
    let lse = k0 + t.max(T::zero()) + e.ln_1p();
    let w = if t >= T::zero() { T::one() / (T::one() + e) } else { e / (T::one() + e) };
    (lse - half * (T::c(LN_2PI) + sigma2.ln()), w)
}

/// Log of the mixture density of one observation.
pub fn mixture_logdensity<T: Scalar>(y: T, x: &[T], d: T, z: &[T], p: &MixtureParams<T>) -> T {
    let r0 = y - dot(x, &p.alpha) - d * p.beta;
    let r1 = r0 - d * p.lambda;
    row_mix(r0, r1, dot(z, &p.gamma), p.sigma2).0
}

/// Log-likelihood summed over rows with compensated accumulation.
pub fn loglik<T: Scalar>(ds: &Dataset<T>, p: &MixtureParams<T>) -> Result<T> {
    p.check_dims(ds)?;
    let mut acc = KahanSum::new();
    for i in 0..ds.n() {
        acc.add(mixture_logdensity(ds.y[i], ds.x_row(i), ds.d[i], ds.z_row(i), p));
    }
    Ok(acc.value())
}

/// `loglik - pen * ||gamma||_1`; the intercept coordinate of gamma is penalized too.
pub fn penalized_loglik<T: Scalar>(ds: &Dataset<T>, p: &MixtureParams<T>, pen: T) -> Result<T> {
    if !(pen >= T::zero()) {
        return Err(Error::Domain(format!("penalty must be >= 0, got {pen}")));
    }
    Ok(loglik(ds, p)? - pen * p.gamma_l1())
}

/// Gaussian regression log-likelihood of the null model.
pub fn null_loglik<T: Scalar>(ds: &Dataset<T>, p: &NullParams<T>) -> Result<T> {
    if p.alpha.len() != ds.q() {
        return Err(Error::Dimension("alpha length differs from q".into()));
    }
    let half = T::c(0.5);
    let c = -half * (T::c(LN_2PI) + p.sigma2.ln());
    let mut acc = KahanSum::new();
    for i in 0..ds.n() {
        let r = ds.y[i] - dot(ds.x_row(i), &p.alpha) - ds.d[i] * p.beta;
        acc.add(c - half * r * r / p.sigma2);
    }
    Ok(acc.value())
}
