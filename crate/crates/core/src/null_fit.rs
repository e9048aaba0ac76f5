//! Closed-form Gaussian MLE of the homogeneous model (`lambda = 0`).

use crate::error::{Error, Result};
use crate::model::{null_loglik, Dataset, NullParams, SIGMA2_FLOOR};
use crate::numerics::{dot, ksum, lstsq_qr};
use crate::scalar::Scalar;

/// Relative pivot threshold for rank detection in the `[X, D]` design.
pub const RANK_TOL: f64 = 1e-10;

/// Least squares of `y` on `[X, D]`, `sigma2 = RSS / n` (floored), and the
/// log-likelihood at the estimate.
pub fn fit_null<T: Scalar>(ds: &Dataset<T>) -> Result<(NullParams<T>, T)> {
    fit_null_with_floor(ds, T::c(SIGMA2_FLOOR))
}

pub fn fit_null_with_floor<T: Scalar>(ds: &Dataset<T>, sigma2_floor: T) -> Result<(NullParams<T>, T)> {
    ds.check_fit_ready()?;
    let (n, q) = (ds.n(), ds.q());
    let k = q + 1;
    let mut design = Vec::with_capacity(n * k);
    for i in 0..n {
        design.extend_from_slice(ds.x_row(i));
        design.push(ds.d()[i]);
    }
    let coef = lstsq_qr(&design, n, k, ds.y(), T::c(RANK_TOL))
        .ok_or_else(|| Error::DegenerateDesign("[X, D] is rank deficient".into()))?;
    let alpha = coef[..q].to_vec();
    let beta = coef[q];
    let rss = ksum((0..n).map(|i| {
        let r = ds.y()[i] - dot(ds.x_row(i), &alpha) - ds.d()[i] * beta;
        r * r
    }));
    let sigma2 = (rss / T::from_usize_lossy(n)).max(sigma2_floor);
    let params = NullParams { alpha, beta, sigma2 };
    let ll = null_loglik(ds, &params)?;
    Ok((params, ll))
}
