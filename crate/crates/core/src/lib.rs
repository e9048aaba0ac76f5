//! Shrinkage likelihood ratio test (SLRT) for the existence of a
//! treatment-effect subgroup in a logistic-normal mixture regression.
//!
//! The model is `Y = X'alpha + D (beta + delta lambda) + eps` with latent
//! membership `P(delta = 1 | Z) = logistic(Z'gamma)`. The test compares the
//! L1-penalized mixture fit with the homogeneous fit (`lambda = 0`) and
//! calibrates the statistic against `0.5 chi2_1 + 0.5 chi2_0`.
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below pin the common `f64` instantiations.

pub mod chisq;
pub mod em;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod null_fit;
pub mod numerics;
pub mod rng;
pub mod scalar;
pub mod simgen;

pub use em::{
    e_step, fit_from, fit_gamma_zero, fit_penalized, logistic_kkt_violation, m_step_logistic, m_step_regression,
    EmConfig, FitResult, LogisticFit,
};
pub use error::{Error, ErrorClass, Result};
pub use experiment::{
    calibrate_formula, run_power, run_size, CalibrationResult, ExperimentKind, ExperimentResult, ExperimentSpec,
    Method, PenRule,
};
pub use inference::{
    compute_slrt, half_chisq_critical, half_chisq_pvalue, lrt_gamma_zero, tuning_pen, tuning_pen_with, LogBase,
    TestOutcome,
};
pub use ingest::{ingest_csv, write_dataset_csv, CsvSchema};
pub use model::{
    logistic, loglik, mixture_logdensity, penalized_loglik, Dataset, MixtureParams, NullParams, ParamBounds,
};
pub use null_fit::fit_null;
pub use scalar::Scalar;
pub use simgen::{gen_dataset, gen_sigma_cholesky, sample_skewnormal_std, DgpSpec, Setting};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type MixtureParams64 = MixtureParams<f64>;
pub type MixtureParams32 = MixtureParams<f32>;
pub type NullParams64 = NullParams<f64>;
pub type EmConfig64 = EmConfig<f64>;
pub type EmConfig32 = EmConfig<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type TestOutcome64 = TestOutcome<f64>;
