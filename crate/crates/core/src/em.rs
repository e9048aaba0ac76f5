//! Penalized EM for the logistic-normal mixture.
//!
//! The complete-data objective splits into a Gaussian block in
//! `(alpha, beta, lambda, sigma2)` and a weighted logistic block in `gamma`.
//! The Gaussian block is solved exactly (with `lambda` clipped to its box);
//! the logistic block carries the L1 penalty and is solved by proximal
//! Newton steps with cyclic coordinate descent and a backtracking guard, so
//! every EM iteration is non-decreasing in the penalized log-likelihood.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    logistic, null_loglik, row_mix, Dataset, MixtureParams, NullParams, ParamBounds, SIGMA2_FLOOR,
};
use crate::null_fit::fit_null_with_floor;
use crate::numerics::{cholesky_solve, dot, ksum, l1_norm, soft_threshold, softplus, KahanSum};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Floor on IRLS working weights.
const WORKING_WEIGHT_FLOOR: f64 = 1e-5;
/// Clip for the IRLS working response.
const WORKING_RESPONSE_CLIP: f64 = 1e3;
/// KKT tolerance the logistic solver aims for before stopping.
const KKT_TARGET: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 100;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig<T> {
    pub max_iter: usize,
    /// Stop when the penalized log-likelihood changes by less than `tol * n`.
    pub tol: T,
    pub n_starts: usize,
    /// Cap on coordinate-descent sweeps per proximal Newton step.
    pub cd_max_iter: usize,
    pub cd_tol: T,
    pub seed: u64,
    /// Upper bound on lambda. `None` means `10 * sd(y)`.
    pub lambda_max: Option<T>,
    pub sigma2_floor: T,
    /// Also consider the null fit itself (`lambda = 0`, `gamma = 0`) as a
    /// candidate. It is a fixed point of the EM map.
    pub null_anchor: bool,
    /// Squared-extrapolation (SQUAREM) acceleration of the EM map. Each
    /// iteration then takes two EM steps, an extrapolation and a
    /// stabilizing step, keeping the extrapolated point only if it is
    /// better, so the trace stays monotone.
    pub accelerate: bool,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: T::c(1e-9),
            n_starts: 5,
            cd_max_iter: 200,
            cd_tol: T::c(1e-9),
            seed: 0,
            lambda_max: None,
            sigma2_floor: T::c(SIGMA2_FLOOR),
            null_anchor: true,
            accelerate: true,
        }
    }
}

impl<T: Scalar> EmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 || self.n_starts < 1 || self.cd_max_iter < 1 {
            return Err(Error::Config("max_iter, n_starts and cd_max_iter must be >= 1".into()));
        }
        if !(self.tol > T::zero()) || !(self.cd_tol > T::zero()) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.sigma2_floor > T::zero()) {
            return Err(Error::Config("sigma2_floor must be positive".into()));
        }
        if let Some(u) = self.lambda_max {
            if !(u > T::zero()) || !u.is_finite() {
                return Err(Error::Config("lambda_max must be positive and finite".into()));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, ds: &Dataset<T>) -> ParamBounds<T> {
        let mut b = ParamBounds::for_dataset(ds);
        if let Some(u) = self.lambda_max {
            b.lambda_max = u;
        }
        b.sigma2_floor = self.sigma2_floor;
        b
    }
}

/// Outcome of one penalized (or gamma-pinned) EM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub params: MixtureParams<T>,
    /// Unpenalized log-likelihood at `params`.
    pub loglik: T,
    pub penalized_loglik: T,
    pub pen: T,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized log-likelihood after each EM iteration (entry 0 is the start).
    pub trace: Vec<T>,
    /// Index of the winning start; `n_starts` denotes the null anchor.
    pub start_index: usize,
    /// Number of starts that errored out.
    pub failed_starts: usize,
}

/// Output of the weighted L1-logistic solver.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<T> {
    pub gamma: Vec<T>,
    pub converged: bool,
    pub newton_steps: usize,
}

/// Posterior probability that each row belongs to the shifted component.
pub fn e_step<T: Scalar>(ds: &Dataset<T>, p: &MixtureParams<T>) -> Vec<T> {
    let mut w = vec![T::zero(); ds.n()];
    e_step_into(ds, p, &mut w);
    w
}

/// Fills `w` and returns the log-likelihood at `p`.
fn e_step_into<T: Scalar>(ds: &Dataset<T>, p: &MixtureParams<T>, w: &mut [T]) -> T {
    let mut ll = KahanSum::new();
    let (y, d) = (ds.y(), ds.d());
    let gamma_zero = p.gamma.iter().all(|&g| g == T::zero());
    for i in 0..ds.n() {
        let r0 = y[i] - dot(ds.x_row(i), &p.alpha) - d[i] * p.beta;
        let r1 = r0 - d[i] * p.lambda;
        let zg = if gamma_zero { T::zero() } else { dot(ds.z_row(i), &p.gamma) };
        let (lf, wi) = row_mix(r0, r1, zg, p.sigma2);
        ll.add(lf);
        w[i] = wi;
    }
    ll.value()
}

/// Data-only quantities reused by every Gaussian M-step on one dataset.
#[derive(Debug, Clone)]
pub(crate) struct RegressionWorkspace<T> {
    /// `[X, D]' [X, D]`, row-major `(q+1) x (q+1)`.
    gram: Vec<T>,
    /// Null least-squares coefficients `(alpha, beta)`.
    theta0: Vec<T>,
    /// Null residuals `y - [X, D] theta0`.
    resid0: Vec<T>,
    null: NullParams<T>,
    null_loglik: T,
}

impl<T: Scalar> RegressionWorkspace<T> {
    pub(crate) fn new(ds: &Dataset<T>, sigma2_floor: T) -> Result<Self> {
        let (null, null_ll) = fit_null_with_floor(ds, sigma2_floor)?;
        let q = ds.q();
        let k = q + 1;
        let mut gram = vec![T::zero(); k * k];
        let mut row = vec![T::zero(); k];
        for i in 0..ds.n() {
            row[..q].copy_from_slice(ds.x_row(i));
            row[q] = ds.d()[i];
            for a in 0..k {
                for b in a..k {
                    gram[a * k + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[a * k + b] = gram[b * k + a];
            }
        }
        let mut theta0 = null.alpha.clone();
        theta0.push(null.beta);
        let resid0 = (0..ds.n())
            .map(|i| ds.y()[i] - dot(ds.x_row(i), &null.alpha) - ds.d()[i] * null.beta)
            .collect();
        Ok(Self {
            gram,
            theta0,
            resid0,
            null,
            null_loglik: null_ll,
        })
    }
}

/// Gaussian block of the M-step for fixed posterior weights.
///
/// Minimizes `sum w (y - x'a - d(b + l))^2 + (1 - w)(y - x'a - d b)^2` over
/// `(alpha, beta)` and `lambda in [0, lambda_max]`, then sets
/// `sigma2 = RSS / n` floored at `sigma2_floor`.
pub fn m_step_regression<T: Scalar>(
    ds: &Dataset<T>,
    w: &[T],
    lambda_max: T,
    sigma2_floor: T,
) -> Result<(Vec<T>, T, T, T)> {
    if w.len() != ds.n() {
        return Err(Error::Dimension("weights length differs from n".into()));
    }
    let ws = RegressionWorkspace::new(ds, sigma2_floor)?;
    regression_update(ds, &ws, w, lambda_max, sigma2_floor, false)
}

/// Profiled solve of the three-block normal equations.
///
/// With `A = [X, D]` and `u = w * d` the objective equals
/// `|y - lambda u - A theta|^2 + lambda^2 sum w (1 - w) d^2`, so
/// `theta(lambda) = theta0 - lambda G^{-1} A'u` and the profile in lambda is a
/// scalar quadratic with curvature `sum w d^2 - c' G^{-1} c` (`c = A'u`).
/// Clipping its minimizer to the box is the boundary refit.
fn regression_update<T: Scalar>(
    ds: &Dataset<T>,
    ws: &RegressionWorkspace<T>,
    w: &[T],
    lambda_max: T,
    sigma2_floor: T,
    pin_lambda_zero: bool,
) -> Result<(Vec<T>, T, T, T)> {
    let (n, q) = (ds.n(), ds.q());
    let k = q + 1;
    let (y, d) = (ds.y(), ds.d());

    let mut lambda = T::zero();
    let mut theta = ws.theta0.clone();
    if !pin_lambda_zero {
        let mut c = vec![KahanSum::new(); k];
        let mut swdd = KahanSum::new();
        let mut b = KahanSum::new();
        for i in 0..n {
            let u = w[i] * d[i];
            if u == T::zero() {
                continue;
            }
            for (cj, &xj) in c.iter_mut().zip(ds.x_row(i)) {
                cj.add(u * xj);
            }
            c[q].add(u * d[i]);
            swdd.add(u * d[i]);
            b.add(u * ws.resid0[i]);
        }
        let c: Vec<T> = c.iter().map(KahanSum::value).collect();
        let h = cholesky_solve(&ws.gram, &c, T::c(1e-13))
            .ok_or_else(|| Error::DegenerateDesign("[X, D] Gram matrix is singular".into()))?;
        let curvature = swdd.value() - dot(&c, &h);
        let scale = swdd.value().max(T::min_positive_value());
        if curvature > T::c(1e-12) * scale {
            lambda = (b.value() / curvature).max(T::zero()).min(lambda_max);
        }
        for (t, hj) in theta.iter_mut().zip(&h) {
            *t -= lambda * *hj;
        }
    }

    let alpha = theta[..q].to_vec();
    let beta = theta[q];
    let rss = ksum((0..n).map(|i| {
        let r0 = y[i] - dot(ds.x_row(i), &alpha) - d[i] * beta;
        let r1 = r0 - d[i] * lambda;
        w[i] * r1 * r1 + (T::one() - w[i]) * r0 * r0
    }));
    let sigma2 = (rss / T::from_usize_lossy(n)).max(sigma2_floor);
    if !sigma2.is_finite() || !beta.is_finite() {
        return Err(Error::DegenerateDesign("non-finite regression update".into()));
    }
    Ok((alpha, beta, lambda, sigma2))
}

/// Column-major view of `Z` for coordinate descent.
struct LogisticSolver<'a, T> {
    cols: &'a [Vec<T>],
    w: &'a [T],
    n: usize,
}

fn to_columns<T: Scalar>(z: &[T], n: usize, dz: usize) -> Vec<Vec<T>> {
    (0..dz).map(|j| (0..n).map(|i| z[i * dz + j]).collect()).collect()
}

impl<'a, T: Scalar> LogisticSolver<'a, T> {
    fn new(cols: &'a [Vec<T>], w: &'a [T]) -> Self {
        Self { cols, w, n: w.len() }
    }

    fn linear_predictor(&self, gamma: &[T], eta: &mut [T]) {
        eta.iter_mut().for_each(|e| *e = T::zero());
        for (col, &g) in self.cols.iter().zip(gamma) {
            if g != T::zero() {
                for (e, &zij) in eta.iter_mut().zip(col) {
                    *e += zij * g;
                }
            }
        }
    }

    /// `sum w eta - softplus(eta) - pen |gamma|_1`
    fn objective(&self, eta: &[T], gamma: &[T], pen: T) -> T {
        let ll = ksum(eta.iter().zip(self.w).map(|(&e, &wi)| wi * e - softplus(e)));
        ll - pen * l1_norm(gamma)
    }

    fn gradient(&self, eta: &[T]) -> Vec<T> {
        let resid: Vec<T> = eta.iter().zip(self.w).map(|(&e, &wi)| wi - logistic(e)).collect();
        self.gradient_from_resid(&resid)
    }

    fn gradient_from_resid(&self, resid: &[T]) -> Vec<T> {
        self.cols.iter().map(|c| dot(c, resid)).collect()
    }

    fn kkt_violation(grad: &[T], gamma: &[T], pen: T) -> T {
        grad.iter().zip(gamma).fold(T::zero(), |worst, (&g, &b)| {
            let v = if b == T::zero() {
                (g.abs() - pen).max(T::zero())
            } else {
                (g - pen * b.signum()).abs()
            };
            worst.max(v)
        })
    }

    /// Cyclic CD on `0.5 sum v (zeta - z'gamma)^2 + pen |gamma|_1`, warm
    /// started at `gamma`. Returns whether the sweep tolerance was met.
    fn solve_quadratic(
        &self,
        v: &[T],
        resid: &mut [T],
        gamma: &mut [T],
        pen: T,
        max_sweeps: usize,
        tol: T,
    ) -> bool {
        let curv: Vec<T> = self
            .cols
            .iter()
            .map(|c| c.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + b * a * a))
            .collect();
        let mut full_sweep = true;
        for _ in 0..max_sweeps {
            let mut max_delta = T::zero();
            for j in 0..gamma.len() {
                if !full_sweep && gamma[j] == T::zero() {
                    continue;
                }
                if curv[j] <= T::zero() {
                    continue;
                }
                let col = &self.cols[j];
                let old = gamma[j];
                let mut rho = T::zero();
                for i in 0..self.n {
                    rho += v[i] * col[i] * resid[i];
                }
                rho += curv[j] * old;
                let new = soft_threshold(rho, pen) / curv[j];
                if new != old {
                    let delta = new - old;
                    for i in 0..self.n {
                        resid[i] -= col[i] * delta;
                    }
                    gamma[j] = new;
                    max_delta = max_delta.max(delta.abs() * curv[j].sqrt());
                }
            }
            if max_delta <= tol {
                if full_sweep {
                    return true;
                }
                full_sweep = true;
            } else {
                full_sweep = false;
            }
        }
        false
    }

    fn solve(&self, pen: T, init: Option<&[T]>, max_sweeps: usize, cd_tol: T) -> LogisticFit<T> {
        let dz = self.cols.len();
        // KKT at the origin: the concave objective is maximized at zero
        let half = T::c(0.5);
        let centered: Vec<T> = self.w.iter().map(|&wi| wi - half).collect();
        let at_zero = self
            .cols
            .iter()
            .map(|c| dot(c, &centered).abs())
            .fold(T::zero(), T::max);
        if at_zero <= pen {
            return LogisticFit {
                gamma: vec![T::zero(); dz],
                converged: true,
                newton_steps: 0,
            };
        }

        let mut gamma = init.map_or_else(|| vec![T::zero(); dz], <[T]>::to_vec);
        let mut eta = vec![T::zero(); self.n];
        self.linear_predictor(&gamma, &mut eta);
        let mut obj = self.objective(&eta, &gamma, pen);
        let vfloor = T::c(WORKING_WEIGHT_FLOOR);
        let clip = T::c(WORKING_RESPONSE_CLIP);
        let kkt_target = T::c(KKT_TARGET);

        let mut v = vec![T::zero(); self.n];
        let mut pi = vec![T::zero(); self.n];
        let mut resid = vec![T::zero(); self.n];
        let mut trial_eta = vec![T::zero(); self.n];
        for step in 0..MAX_NEWTON_STEPS {
            for i in 0..self.n {
                pi[i] = logistic(eta[i]);
                resid[i] = self.w[i] - pi[i];
            }
            let grad = self.gradient_from_resid(&resid);
            if Self::kkt_violation(&grad, &gamma, pen) <= kkt_target {
                return LogisticFit { gamma, converged: true, newton_steps: step };
            }
            for i in 0..self.n {
                let vi = (pi[i] * (T::one() - pi[i])).max(vfloor);
                v[i] = vi;
                // working response minus current fit
                let zeta = (eta[i] + resid[i] / vi).max(-clip).min(clip);
                resid[i] = zeta - eta[i];
            }
            let mut proposal = gamma.clone();
            self.solve_quadratic(&v, &mut resid, &mut proposal, pen, max_sweeps, cd_tol);

            // backtrack along gamma -> proposal until the objective does not drop
            let dir: Vec<T> = proposal.iter().zip(&gamma).map(|(&a, &b)| a - b).collect();
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<T> = gamma.iter().zip(&dir).map(|(&g, &dj)| g + t * dj).collect();
                self.linear_predictor(&trial, &mut trial_eta);
                let trial_obj = self.objective(&trial_eta, &trial, pen);
                if trial_obj >= obj {
                    let gain = trial_obj - obj;
                    gamma = trial;
                    std::mem::swap(&mut eta, &mut trial_eta);
                    obj = trial_obj;
                    accepted = gain > T::zero();
                    break;
                }
                t *= T::c(0.5);
            }
            if !accepted {
                let grad = self.gradient(&eta);
                let ok = Self::kkt_violation(&grad, &gamma, pen) <= T::c(1e-6);
                return LogisticFit { gamma, converged: ok, newton_steps: step + 1 };
            }
        }
        let grad = self.gradient(&eta);
        let ok = Self::kkt_violation(&grad, &gamma, pen) <= T::c(1e-6);
        LogisticFit { gamma, converged: ok, newton_steps: MAX_NEWTON_STEPS }
    }
}

/// Weighted L1-penalized logistic regression of soft labels `w` on `z`.
///
/// Maximizes `sum w log pi(z'g) + (1 - w) log(1 - pi(z'g)) - pen |g|_1`.
/// `z` is row-major `n x dz`. `init` warm starts the solver.
pub fn m_step_logistic<T: Scalar>(
    z: &[T],
    dz: usize,
    w: &[T],
    pen: T,
    init: Option<&[T]>,
    cd_max_iter: usize,
    cd_tol: T,
) -> Result<LogisticFit<T>> {
    if !(pen >= T::zero()) {
        return Err(Error::Domain(format!("penalty must be >= 0, got {pen}")));
    }
    if dz == 0 || z.len() != w.len() * dz {
        return Err(Error::Dimension("z must be n x dz with dz >= 1".into()));
    }
    if let Some(g) = init {
        if g.len() != dz {
            return Err(Error::Dimension("init length differs from dz".into()));
        }
    }
    let cols = to_columns(z, w.len(), dz);
    Ok(LogisticSolver::new(&cols, w).solve(pen, init, cd_max_iter, cd_tol))
}

/// Subgradient optimality gap of `gamma` for the weighted L1-logistic problem.
pub fn logistic_kkt_violation<T: Scalar>(z: &[T], dz: usize, w: &[T], gamma: &[T], pen: T) -> T {
    let cols = to_columns(z, w.len(), dz);
    let solver = LogisticSolver::new(&cols, w);
    let mut eta = vec![T::zero(); w.len()];
    solver.linear_predictor(gamma, &mut eta);
    LogisticSolver::kkt_violation(&solver.gradient(&eta), gamma, pen)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GammaMode {
    Penalized,
    PinnedZero,
}

struct Fitter<'a, T> {
    ds: &'a Dataset<T>,
    cfg: &'a EmConfig<T>,
    ws: RegressionWorkspace<T>,
    zcols: Vec<Vec<T>>,
    bounds: ParamBounds<T>,
    pen: T,
    mode: GammaMode,
}

impl<'a, T: Scalar> Fitter<'a, T> {
    fn new(ds: &'a Dataset<T>, cfg: &'a EmConfig<T>, pen: T, mode: GammaMode) -> Result<Self> {
        cfg.validate()?;
        if !(pen >= T::zero()) || !pen.is_finite() {
            return Err(Error::Domain(format!("penalty must be finite and >= 0, got {pen}")));
        }
        ds.check_fit_ready()?;
        let bounds = cfg.bounds(ds);
        let ws = RegressionWorkspace::new(ds, bounds.sigma2_floor)?;
        let zcols = if mode == GammaMode::Penalized {
            to_columns(ds.z(), ds.n(), ds.dz())
        } else {
            Vec::new()
        };
        Ok(Self { ds, cfg, ws, zcols, bounds, pen, mode })
    }

    fn starts(&self) -> Vec<MixtureParams<T>> {
        let null = &self.ws.null;
        let dz = self.ds.dz();
        let sd = self.ds.y_sd().max(T::c(1e-3));
        let cap = self.bounds.lambda_max;
        let mut out = Vec::with_capacity(self.cfg.n_starts);
        out.push(MixtureParams {
            alpha: null.alpha.clone(),
            beta: null.beta,
            lambda: (T::c(0.5) * sd).min(cap),
            sigma2: null.sigma2,
            gamma: vec![T::zero(); dz],
        });
        for s in 1..self.cfg.n_starts {
            let mut rng = substream(self.cfg.seed, s as u64);
            let beta = null.beta + sd * T::c(rng.gen_range(-0.5..0.5));
            let lambda = (sd * T::c(rng.gen_range(0.1..1.5))).min(cap);
            let gamma = match self.mode {
                GammaMode::Penalized => (0..dz).map(|_| T::c(rng.gen_range(-0.1..0.1))).collect(),
                GammaMode::PinnedZero => vec![T::zero(); dz],
            };
            out.push(MixtureParams {
                alpha: null.alpha.clone(),
                beta,
                lambda,
                sigma2: null.sigma2,
                gamma,
            });
        }
        out
    }

    /// One EM map application: M-step from the weights `w` of `params`.
    fn m_step(&self, params: &MixtureParams<T>, w: &[T]) -> Result<MixtureParams<T>> {
        let (alpha, beta, lambda, sigma2) =
            regression_update(self.ds, &self.ws, w, self.bounds.lambda_max, self.bounds.sigma2_floor, false)?;
        let gamma = match self.mode {
            GammaMode::Penalized => {
                LogisticSolver::new(&self.zcols, w)
                    .solve(self.pen, Some(&params.gamma), self.cfg.cd_max_iter, self.cfg.cd_tol)
                    .gamma
            }
            GammaMode::PinnedZero => params.gamma.clone(),
        };
        Ok(MixtureParams { alpha, beta, lambda, sigma2, gamma })
    }

    /// E-step into `w`; returns `(loglik, penalized loglik)`.
    fn evaluate(&self, params: &MixtureParams<T>, w: &mut [T]) -> (T, T) {
        let ll = e_step_into(self.ds, params, w);
        (ll, ll - self.pen * params.gamma_l1())
    }

    /// Squared extrapolation `p0 - 2a r + a^2 v`, projected onto the box.
    fn extrapolate(&self, p0: &MixtureParams<T>, p1: &MixtureParams<T>, p2: &MixtureParams<T>) -> Option<MixtureParams<T>> {
        let flat = |p: &MixtureParams<T>| {
            let mut v = p.alpha.clone();
            v.extend([p.beta, p.lambda, p.sigma2]);
            v.extend(p.gamma.iter().copied());
            v
        };
        let (x0, x1, x2) = (flat(p0), flat(p1), flat(p2));
        let mut rr = T::zero();
        let mut vv = T::zero();
        for i in 0..x0.len() {
            let r = x1[i] - x0[i];
            let v = x2[i] - T::c(2.0) * x1[i] + x0[i];
            rr += r * r;
            vv += v * v;
        }
        if !(vv > T::zero()) {
            return None;
        }
        let a = (-(rr / vv).sqrt()).min(-T::one());
        let x: Vec<T> = (0..x0.len())
            .map(|i| {
                let r = x1[i] - x0[i];
                let v = x2[i] - T::c(2.0) * x1[i] + x0[i];
                x0[i] - T::c(2.0) * a * r + a * a * v
            })
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let q = p0.alpha.len();
        Some(MixtureParams {
            alpha: x[..q].to_vec(),
            beta: x[q],
            lambda: x[q + 1].max(T::zero()).min(self.bounds.lambda_max),
            sigma2: x[q + 2].max(self.bounds.sigma2_floor),
            gamma: match self.mode {
                GammaMode::Penalized => x[q + 3..].to_vec(),
                GammaMode::PinnedZero => p0.gamma.clone(),
            },
        })
    }

    fn run_start(&self, start: MixtureParams<T>, index: usize) -> Result<FitResult<T>> {
        let n = self.ds.n();
        let threshold = self.cfg.tol * T::from_usize_lossy(n);
        let mut params = start;
        let mut w = vec![T::zero(); n];
        let (mut ll, mut pll) = self.evaluate(&params, &mut w);
        if !pll.is_finite() {
            return Err(Error::FitFailed { starts: 1, reason: "non-finite log-likelihood at start".into() });
        }
        let mut trace = vec![pll];
        let mut converged = false;
        let mut iterations = 0;
        let mut w1 = vec![T::zero(); n];
        let mut w2 = vec![T::zero(); n];

        for it in 1..=self.cfg.max_iter {
            iterations = it;
            let p1 = self.m_step(&params, &w)?;
            let (mut next_ll, mut next) = self.evaluate(&p1, &mut w1);
            let mut next_params = p1;
            std::mem::swap(&mut w, &mut w1);
            if self.cfg.accelerate && next.is_finite() && (next - pll).abs() >= threshold {
                let p1 = next_params;
                let p2 = self.m_step(&p1, &w)?;
                let (ll2, pll2) = self.evaluate(&p2, &mut w2);
                (next_ll, next, next_params) = (ll2, pll2, p2.clone());
                std::mem::swap(&mut w, &mut w2);
                if let Some(px) = self.extrapolate(&params, &p1, &p2) {
                    let (_, pllx) = self.evaluate(&px, &mut w1);
                    if pllx.is_finite() {
                        let ps = self.m_step(&px, &w1)?;
                        let (lls, plls) = self.evaluate(&ps, &mut w2);
                        if plls.is_finite() && plls > pll2 {
                            (next_ll, next, next_params) = (lls, plls, ps);
                            std::mem::swap(&mut w, &mut w2);
                        }
                    }
                }
            }
            if !next.is_finite() {
                return Err(Error::FitFailed { starts: 1, reason: format!("non-finite log-likelihood at iteration {it}") });
            }
            params = next_params;
            ll = next_ll;
            trace.push(next);
            let change = (next - pll).abs();
            pll = next;
            if change < threshold {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            params,
            loglik: ll,
            penalized_loglik: pll,
            pen: self.pen,
            iterations,
            converged,
            trace,
            start_index: index,
            failed_starts: 0,
        })
    }

    fn anchor(&self) -> FitResult<T> {
        let params = MixtureParams::from_null(&self.ws.null, self.ds.dz());
        let ll = self.ws.null_loglik;
        FitResult {
            params,
            loglik: ll,
            penalized_loglik: ll,
            pen: self.pen,
            iterations: 0,
            converged: true,
            trace: vec![ll],
            start_index: self.cfg.n_starts,
            failed_starts: 0,
        }
    }

    fn run(&self) -> Result<FitResult<T>> {
        let mut best: Option<FitResult<T>> = None;
        let mut failures = Vec::new();
        for (index, start) in self.starts().into_iter().enumerate() {
            match self.run_start(start, index) {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|b| fit.penalized_loglik > b.penalized_loglik) {
                        best = Some(fit);
                    }
                }
                Err(e) => failures.push(format!("start {index}: {e}")),
            }
        }
        let Some(mut best) = best else {
            return Err(Error::FitFailed { starts: self.cfg.n_starts, reason: failures.join("; ") });
        };
        if self.cfg.null_anchor {
            let anchor = self.anchor();
            if anchor.penalized_loglik > best.penalized_loglik {
                best = anchor;
            }
        }
        best.failed_starts = failures.len();
        Ok(best)
    }
}

/// Maximizes `loglik - pen * |gamma|_1` over all parameters.
pub fn fit_penalized<T: Scalar>(ds: &Dataset<T>, pen: T, cfg: &EmConfig<T>) -> Result<FitResult<T>> {
    Fitter::new(ds, cfg, pen, GammaMode::Penalized)?.run()
}

/// Benchmark fit: the same EM with `gamma` pinned at zero (mixing weight 1/2).
pub fn fit_gamma_zero<T: Scalar>(ds: &Dataset<T>, cfg: &EmConfig<T>) -> Result<FitResult<T>> {
    Fitter::new(ds, cfg, T::zero(), GammaMode::PinnedZero)?.run()
}

/// Runs EM from one explicit starting point (no multi-start, no anchor).
pub fn fit_from<T: Scalar>(
    ds: &Dataset<T>,
    pen: T,
    start: MixtureParams<T>,
    cfg: &EmConfig<T>,
) -> Result<FitResult<T>> {
    let fitter = Fitter::new(ds, cfg, pen, GammaMode::Penalized)?;
    start.validate(&fitter.bounds)?;
    if start.alpha.len() != ds.q() || start.gamma.len() != ds.dz() {
        return Err(Error::Dimension("start does not match dataset".into()));
    }
    fitter.run_start(start, 0)
}

/// Log-likelihood of the null fit, shared with the test engine.
pub(crate) fn null_fit_for<T: Scalar>(ds: &Dataset<T>, cfg: &EmConfig<T>) -> Result<(NullParams<T>, T)> {
    let bounds = cfg.bounds(ds);
    let (p, _) = fit_null_with_floor(ds, bounds.sigma2_floor)?;
    let ll = null_loglik(ds, &p)?;
    Ok((p, ll))
}
