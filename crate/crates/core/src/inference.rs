//! Shrinkage likelihood ratio statistic, its half chi-square calibration,
//! and the empirical tuning-parameter formula.

use crate::chisq::{chisq_isf, chisq_sf};
use crate::em::{fit_gamma_zero, fit_penalized, null_fit_for, EmConfig, FitResult};
use crate::error::{Error, Result};
use crate::model::{Dataset, MixtureParams, NullParams};
use crate::scalar::Scalar;

/// Intercept of the tuning formula.
pub const PEN_INTERCEPT: f64 = 6.3383;
/// Slope on `n^(7/8) sqrt(log d)`.
pub const PEN_SLOPE: f64 = 0.0086;

/// Logarithm used inside the tuning formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

/// Summary of the penalized fit carried in a [`TestOutcome`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary<T> {
    pub params: MixtureParams<T>,
    pub loglik: T,
    pub penalized_loglik: T,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
}

impl<T: Scalar> From<&FitResult<T>> for FitSummary<T> {
    fn from(f: &FitResult<T>) -> Self {
        Self {
            params: f.params.clone(),
            loglik: f.loglik,
            penalized_loglik: f.penalized_loglik,
            iterations: f.iterations,
            converged: f.converged,
            start_index: f.start_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome<T> {
    /// `2 (loglik at the penalized optimum - null loglik)`, not clamped.
    pub slrt: T,
    pub p_value: T,
    pub pen_used: T,
    pub level: T,
    pub reject: bool,
    pub alt_fit: FitSummary<T>,
    pub null_fit: NullParams<T>,
    pub null_loglik: T,
}

/// Runs the penalized fit and the null fit and forms the statistic.
pub fn compute_slrt<T: Scalar>(ds: &Dataset<T>, pen: T, level: T, cfg: &EmConfig<T>) -> Result<TestOutcome<T>> {
    let crit = half_chisq_critical(level)?;
    let (null, null_ll) = null_fit_for(ds, cfg)?;
    let alt = fit_penalized(ds, pen, cfg)?;
    let slrt = T::c(2.0) * (alt.loglik - null_ll);
    Ok(TestOutcome {
        slrt,
        p_value: half_chisq_pvalue(slrt),
        pen_used: pen,
        level,
        reject: slrt > crit,
        alt_fit: FitSummary::from(&alt),
        null_fit: null,
        null_loglik: null_ll,
    })
}

/// Likelihood ratio statistic of the benchmark model (`gamma = 0`) against the null.
pub fn lrt_gamma_zero<T: Scalar>(ds: &Dataset<T>, cfg: &EmConfig<T>) -> Result<(T, FitResult<T>)> {
    let (_, null_ll) = null_fit_for(ds, cfg)?;
    let fit = fit_gamma_zero(ds, cfg)?;
    Ok((T::c(2.0) * (fit.loglik - null_ll), fit))
}

/// Upper tail of the half chi-square law `0.5 chi2_1 + 0.5 chi2_0`.
/// Non-positive statistics map to `0.5`.
pub fn half_chisq_pvalue<T: Scalar>(t: T) -> T {
    T::c(0.5) * chisq_sf(T::one(), t.max(T::zero()))
}

/// Critical value whose half chi-square upper tail equals `level`.
pub fn half_chisq_critical<T: Scalar>(level: T) -> Result<T> {
    if !(level > T::zero() && level < T::c(0.5)) {
        return Err(Error::Domain(format!("level must lie in (0, 0.5), got {level}")));
    }
    Ok(chisq_isf(T::one(), T::c(2.0) * level))
}

/// `6.3383 + 0.0086 n^(7/8) sqrt(ln d)`.
pub fn tuning_pen<T: Scalar>(n: usize, d: usize) -> Result<T> {
    tuning_pen_with(n, d, LogBase::Natural)
}

pub fn tuning_pen_with<T: Scalar>(n: usize, d: usize, base: LogBase) -> Result<T> {
    if n < 2 {
        return Err(Error::Domain(format!("tuning formula needs n >= 2, got {n}")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("tuning formula needs d >= 2, got {d}")));
    }
    let nf = T::from_usize_lossy(n);
    let df = T::from_usize_lossy(d);
    let log_d = match base {
        LogBase::Natural => df.ln(),
        LogBase::Ten => df.log10(),
    };
    Ok(T::c(PEN_INTERCEPT) + T::c(PEN_SLOPE) * nf.powf(T::c(0.875)) * log_d.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pvalue_conventions() {
        assert_eq!(half_chisq_pvalue(0.0_f64), 0.5);
        assert_eq!(half_chisq_pvalue(-3.0_f64), 0.5);
        assert_abs_diff_eq!(half_chisq_pvalue(2.705543_f64), 0.05, epsilon = 1e-7);
        assert_abs_diff_eq!(half_chisq_pvalue(3.841459_f64), 0.025, epsilon = 1e-7);
    }

    #[test]
    fn pvalue_monotone_on_dense_grid() {
        let mut prev = half_chisq_pvalue(-1.0_f64);
        for k in 1..5000 {
            let t = -1.0 + k as f64 * 0.01;
            let p = half_chisq_pvalue(t);
            assert!(p <= prev);
            if t > 0.0 {
                assert!(p < prev);
            }
            prev = p;
        }
    }

    #[test]
    fn critical_values() {
        assert_abs_diff_eq!(half_chisq_critical(0.05_f64).unwrap(), 2.705543, epsilon = 1e-6);
        assert_abs_diff_eq!(half_chisq_critical(0.025_f64).unwrap(), 3.841459, epsilon = 1e-6);
        for v in [0.01, 0.05, 0.1] {
            let c = half_chisq_critical(v).unwrap();
            assert_abs_diff_eq!(half_chisq_pvalue(c), v, epsilon = 1e-10);
        }
        assert!(half_chisq_critical(0.5_f64).is_err());
        assert!(half_chisq_critical(0.0_f64).is_err());
    }

    #[test]
    fn tuning_formula() {
        // 100^0.875 = 10^1.75
        let by_hand = 6.3383 + 0.0086 * 10f64.powf(1.75) * 10f64.ln().sqrt();
        assert_abs_diff_eq!(tuning_pen::<f64>(100, 10).unwrap(), by_hand, epsilon = 1e-12);
        assert_abs_diff_eq!(tuning_pen::<f64>(100, 10).unwrap(), 7.072, epsilon = 1e-3);
        let small = 6.3383 + 0.0086 * 2f64.powf(0.875) * 2f64.ln().sqrt();
        assert_abs_diff_eq!(tuning_pen::<f64>(2, 2).unwrap(), small, epsilon = 1e-12);
        assert_abs_diff_eq!(small, 6.35143, epsilon = 1e-5);
        for d in [10, 50, 100] {
            assert!(tuning_pen::<f64>(1000, d).unwrap() > tuning_pen::<f64>(100, d).unwrap());
        }
        assert!(tuning_pen::<f64>(100, 1).is_err());
        let ten = tuning_pen_with::<f64>(100, 10, LogBase::Ten).unwrap();
        assert_abs_diff_eq!(ten, 6.3383 + 0.0086 * 10f64.powf(1.75), epsilon = 1e-12);
    }

    #[test]
    fn anchored_null_fit_gives_zero_statistic() {
        use crate::simgen::{gen_dataset, DgpSpec, Setting};
        let cfg = EmConfig::default();
        let found = (0..40u64).find_map(|seed| {
            let ds: Dataset<f64> = gen_dataset(&DgpSpec::null(Setting::I, 200, 2, seed)).unwrap();
            let out = compute_slrt(&ds, 6.5, 0.05, &cfg).unwrap();
            (out.alt_fit.start_index == cfg.n_starts).then_some(out)
        });
        let out = found.expect("some null dataset ends at the anchor");
        assert!(out.slrt.abs() < 1e-8, "slrt {}", out.slrt);
        assert!((out.p_value - 0.5).abs() < 1e-4);
        assert!(!out.reject);
        assert_eq!(out.alt_fit.params.lambda, 0.0);
    }
}
