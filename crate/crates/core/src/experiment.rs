//! Monte Carlo size / power experiments and tuning-formula calibration.
//!
//! Each replication owns a counter-based random stream keyed by
//! `(run seed, phase, setting, n, rep)`, so results do not depend on the
//! number of workers or on which other cells are in the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::inference::{compute_slrt, half_chisq_critical, lrt_gamma_zero, tuning_pen_with, LogBase};
use crate::model::Dataset;
use crate::numerics::lstsq_qr;
use crate::rng::stream_id;
use crate::simgen::{gen_dataset, DgpSpec, Setting};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SLRT_WORKERS";
/// Maximum tolerated share of failed replications per cell.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Size,
    Power,
    Calibrate,
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "size" => Ok(Self::Size),
            "power" => Ok(Self::Power),
            "calibrate" => Ok(Self::Calibrate),
            other => Err(Error::Config(format!("unknown kind `{other}`"))),
        }
    }
}

/// How the SLRT penalty is chosen in a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenRule {
    Formula(LogBase),
    Fixed(f64),
    /// Run only the gamma-fixed-to-zero benchmark.
    BenchmarkZero,
}

impl PenRule {
    pub fn pen_for(&self, n: usize, d: usize) -> Result<Option<f64>> {
        match *self {
            PenRule::Formula(base) => tuning_pen_with(n, d, base).map(Some),
            PenRule::Fixed(v) if v >= 0.0 && v.is_finite() => Ok(Some(v)),
            PenRule::Fixed(v) => Err(Error::Config(format!("fixed penalty must be >= 0, got {v}"))),
            PenRule::BenchmarkZero => Ok(None),
        }
    }
}

impl FromStr for PenRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "formula" => Ok(PenRule::Formula(LogBase::Natural)),
            "formula_log10" => Ok(PenRule::Formula(LogBase::Ten)),
            "benchmark_zero" => Ok(PenRule::BenchmarkZero),
            _ => {
                let v = s
                    .strip_prefix("fixed:")
                    .or_else(|| s.strip_prefix("fixed(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| Error::Config(format!("unknown pen_rule `{s}`")))?;
                v.trim()
                    .parse()
                    .map(PenRule::Fixed)
                    .map_err(|_| Error::Config(format!("bad fixed penalty `{v}`")))
            }
        }
    }
}

impl std::fmt::Display for PenRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PenRule::Formula(LogBase::Natural) => f.write_str("formula"),
            PenRule::Formula(LogBase::Ten) => f.write_str("formula_log10"),
            PenRule::Fixed(v) => write!(f, "fixed:{v}"),
            PenRule::BenchmarkZero => f.write_str("benchmark_zero"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub settings: Vec<Setting>,
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub pen_rule: PenRule,
    /// Power only: use empirical null critical values.
    pub size_adjust: bool,
    pub lambda_true: f64,
    pub em: EmConfig<f64>,
    /// Calibration only.
    pub candidate_pens: Vec<f64>,
    /// Calibration only: admissible distance to the benchmark frequency.
    pub window: f64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        let reps = match kind {
            ExperimentKind::Power => 1000,
            _ => 2000,
        };
        Self {
            kind,
            settings: vec![Setting::I],
            ns: vec![500],
            ds: vec![10],
            reps,
            level: 0.05,
            seed: 20,
            pen_rule: PenRule::Formula(LogBase::Natural),
            size_adjust: kind == ExperimentKind::Power,
            lambda_true: 1.0,
            em: EmConfig::default(),
            candidate_pens: Vec::new(),
            window: 0.003,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 0.5) {
            return Err(Error::Config(format!("level must lie in (0, 0.5), got {}", self.level)));
        }
        if self.settings.is_empty() || self.ns.is_empty() || self.ds.is_empty() {
            return Err(Error::Config("settings, ns and ds must be non-empty".into()));
        }
        if self.ns.iter().any(|&n| n < 2) || self.ds.iter().any(|&d| d < 2) {
            return Err(Error::Config("every n and d must be >= 2".into()));
        }
        if !(self.lambda_true >= 0.0) {
            return Err(Error::Config("lambda_true must be >= 0".into()));
        }
        if self.kind == ExperimentKind::Calibrate {
            if self.candidate_pens.is_empty() {
                return Err(Error::Config("calibration needs candidate_pens".into()));
            }
            if self.candidate_pens.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Config("candidate_pens must be sorted ascending".into()));
            }
            if !(self.window > 0.0) {
                return Err(Error::Config("window must be > 0".into()));
            }
        }
        self.em.validate()
    }

    /// Parses a plain `key = value` file. `#` starts a comment; lists are
    /// comma separated. Unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let kind: ExperimentKind = kv
            .remove("kind")
            .ok_or_else(|| Error::Config("missing `kind`".into()))?
            .parse()?;
        let mut spec = Self::new(kind);
        for (k, v) in kv {
            spec.set(&k, &v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(key: &str, v: &str) -> Result<V> {
            v.trim().parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        fn list<V: FromStr>(key: &str, v: &str) -> Result<Vec<V>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
        }
        match key {
            "kind" => self.kind = value.parse()?,
            "settings" | "setting" => {
                self.settings = value.split(',').map(str::parse).collect::<Result<Vec<_>>>()?
            }
            "ns" | "n" => self.ns = list(key, value)?,
            "ds" | "d" => self.ds = list(key, value)?,
            "reps" => self.reps = num(key, value)?,
            "level" => self.level = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "pen_rule" => self.pen_rule = value.parse()?,
            "size_adjust" => self.size_adjust = num(key, value)?,
            "lambda_true" => self.lambda_true = num(key, value)?,
            "candidate_pens" => self.candidate_pens = list(key, value)?,
            "window" => self.window = num(key, value)?,
            "max_iter" => self.em.max_iter = num(key, value)?,
            "tol" => self.em.tol = num(key, value)?,
            "n_starts" => self.em.n_starts = num(key, value)?,
            "cd_max_iter" => self.em.cd_max_iter = num(key, value)?,
            "cd_tol" => self.em.cd_tol = num(key, value)?,
            "em_seed" => self.em.seed = num(key, value)?,
            "lambda_max" => self.em.lambda_max = Some(num(key, value)?),
            "sigma2_floor" => self.em.sigma2_floor = num(key, value)?,
            "null_anchor" => self.em.null_anchor = num(key, value)?,
            "accelerate" => self.em.accelerate = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key = value` echo, readable by [`ExperimentSpec::from_config_str`].
    pub fn to_config_string(&self) -> String {
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let settings = self.settings.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let kind = match self.kind {
            ExperimentKind::Size => "size",
            ExperimentKind::Power => "power",
            ExperimentKind::Calibrate => "calibrate",
        };
        let mut s = String::new();
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "settings = {settings}");
        let _ = writeln!(s, "ns = {}", join(&self.ns));
        let _ = writeln!(s, "ds = {}", join(&self.ds));
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "level = {}", self.level);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "pen_rule = {}", self.pen_rule);
        let _ = writeln!(s, "size_adjust = {}", self.size_adjust);
        let _ = writeln!(s, "lambda_true = {}", self.lambda_true);
        let _ = writeln!(s, "max_iter = {}", self.em.max_iter);
        let _ = writeln!(s, "tol = {}", self.em.tol);
        let _ = writeln!(s, "n_starts = {}", self.em.n_starts);
        let _ = writeln!(s, "cd_max_iter = {}", self.em.cd_max_iter);
        let _ = writeln!(s, "cd_tol = {}", self.em.cd_tol);
        let _ = writeln!(s, "em_seed = {}", self.em.seed);
        if let Some(u) = self.em.lambda_max {
            let _ = writeln!(s, "lambda_max = {u}");
        }
        let _ = writeln!(s, "sigma2_floor = {}", self.em.sigma2_floor);
        let _ = writeln!(s, "null_anchor = {}", self.em.null_anchor);
        let _ = writeln!(s, "accelerate = {}", self.em.accelerate);
        if self.kind == ExperimentKind::Calibrate {
            let pens = self.candidate_pens.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
            let _ = writeln!(s, "candidate_pens = {pens}");
            let _ = writeln!(s, "window = {}", self.window);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// gamma fixed to zero
    Benchmark,
    Slrt,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Benchmark => "benchmark",
            Method::Slrt => "slrt",
        })
    }
}

/// Which data-generating phase a replication belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Null,
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellDesign {
    pub setting: Setting,
    pub n: usize,
    pub d: usize,
}

/// Statistics from one replication. `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub slrt: Option<f64>,
    pub benchmark: Option<f64>,
    pub slrt_secs: f64,
    pub benchmark_secs: f64,
}

impl RepOutcome {
    pub fn stat(&self, m: Method) -> Option<f64> {
        match m {
            Method::Slrt => self.slrt,
            Method::Benchmark => self.benchmark,
        }
    }
    fn secs(&self, m: Method) -> f64 {
        match m {
            Method::Slrt => self.slrt_secs,
            Method::Benchmark => self.benchmark_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub setting: Setting,
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub level: f64,
    pub rejection_frequency: f64,
    pub mc_stderr: f64,
    pub mean_runtime: f64,
    pub critical_value: f64,
    pub pen: Option<f64>,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
    pub version: String,
}

/// Builds the worker pool, sized from `SLRT_WORKERS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

fn phase_id(p: Phase) -> u64 {
    match p {
        Phase::Null => 0,
        Phase::Alternative => 1,
    }
}

/// The dataset specification for one replication.
pub fn replication_dgp(spec: &ExperimentSpec, cell: CellDesign, phase: Phase, rep: usize) -> DgpSpec {
    let stream = stream_id(&[phase_id(phase), cell.setting.index(), cell.n as u64, rep as u64]);
    let mut dgp = match phase {
        Phase::Null => DgpSpec::null(cell.setting, cell.n, cell.d, spec.seed),
        Phase::Alternative => DgpSpec::alternative(cell.setting, cell.n, cell.d, spec.seed),
    };
    dgp.lambda_true = spec.lambda_true;
    dgp.stream = stream;
    dgp.sigma_seed = spec.seed;
    dgp
}

fn em_for_rep(spec: &ExperimentSpec, stream: u64) -> EmConfig<f64> {
    EmConfig {
        seed: stream_id(&[spec.em.seed, stream]),
        ..spec.em.clone()
    }
}

fn run_one(spec: &ExperimentSpec, ds: &Dataset<f64>, pen: Option<f64>, em: &EmConfig<f64>) -> RepOutcome {
    let t0 = Instant::now();
    let benchmark = lrt_gamma_zero(ds, em).ok().map(|(s, _)| s);
    let benchmark_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let slrt = pen.and_then(|p| compute_slrt(ds, p, spec.level, em).ok().map(|o| o.slrt));
    RepOutcome {
        slrt,
        benchmark,
        slrt_secs: t1.elapsed().as_secs_f64(),
        benchmark_secs,
    }
}

/// Simulates `spec.reps` replications of one cell, in replication order.
pub fn simulate_cell(spec: &ExperimentSpec, cell: CellDesign, phase: Phase) -> Result<Vec<RepOutcome>> {
    let pen = spec.pen_rule.pen_for(cell.n, cell.d)?;
    let pool = worker_pool()?;
    pool.install(|| {
        (0..spec.reps)
            .into_par_iter()
            .map(|rep| {
                let dgp = replication_dgp(spec, cell, phase, rep);
                let ds = gen_dataset::<f64>(&dgp)?;
                Ok(run_one(spec, &ds, pen, &em_for_rep(spec, dgp.stream)))
            })
            .collect()
    })
}

fn methods(rule: &PenRule) -> &'static [Method] {
    match rule {
        PenRule::BenchmarkZero => &[Method::Benchmark],
        _ => &[Method::Benchmark, Method::Slrt],
    }
}

fn summarize(
    spec: &ExperimentSpec,
    cell: CellDesign,
    method: Method,
    outcomes: &[RepOutcome],
    critical_value: f64,
) -> Result<CellResult> {
    let stats: Vec<f64> = outcomes.iter().filter_map(|o| o.stat(method)).collect();
    let failures = outcomes.len() - stats.len();
    if failures as f64 > MAX_FAILURE_RATE * outcomes.len() as f64 {
        return Err(Error::Experiment(format!(
            "setting {} n={} d={} {method}: {failures} of {} replications failed",
            cell.setting,
            cell.n,
            cell.d,
            outcomes.len()
        )));
    }
    let ok = stats.len();
    let f = if ok == 0 {
        0.0
    } else {
        stats.iter().filter(|&&s| s > critical_value).count() as f64 / ok as f64
    };
    let mean_runtime = outcomes.iter().map(|o| o.secs(method)).sum::<f64>() / outcomes.len().max(1) as f64;
    Ok(CellResult {
        setting: cell.setting,
        n: cell.n,
        d: cell.d,
        method,
        level: spec.level,
        rejection_frequency: f,
        mc_stderr: if ok == 0 { 0.0 } else { (f * (1.0 - f) / ok as f64).sqrt() },
        mean_runtime,
        critical_value,
        pen: if method == Method::Slrt { spec.pen_rule.pen_for(cell.n, cell.d)? } else { None },
        reps: ok,
        failures,
    })
}

fn cells_of(spec: &ExperimentSpec) -> Vec<CellDesign> {
    let mut out = Vec::new();
    for &setting in &spec.settings {
        for &d in &spec.ds {
            for &n in &spec.ns {
                out.push(CellDesign { setting, n, d });
            }
        }
    }
    out
}

/// Type I error of both tests against the asymptotic critical value.
pub fn run_size(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let crit = half_chisq_critical(spec.level)?;
    let mut cells = Vec::new();
    for cell in cells_of(spec) {
        let outcomes = simulate_cell(spec, cell, Phase::Null)?;
        for &m in methods(&spec.pen_rule) {
            cells.push(summarize(spec, cell, m, &outcomes, crit)?);
        }
    }
    Ok(ExperimentResult { spec: spec.clone(), cells, version: env!("CARGO_PKG_VERSION").into() })
}

/// Empirical quantile, linear interpolation between order statistics
/// (type 7 in Hyndman and Fan's taxonomy).
pub fn empirical_quantile(values: &[f64], prob: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Power of both tests. With `size_adjust`, each method's critical value is
/// the `1 - level` quantile of its own statistic over the paired null run.
pub fn run_power(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let asymptotic = half_chisq_critical(spec.level)?;
    let mut cells = Vec::new();
    for cell in cells_of(spec) {
        let null = if spec.size_adjust { Some(simulate_cell(spec, cell, Phase::Null)?) } else { None };
        let alt = simulate_cell(spec, cell, Phase::Alternative)?;
        for &m in methods(&spec.pen_rule) {
            let crit = match &null {
                Some(outcomes) => {
                    let stats: Vec<f64> = outcomes.iter().filter_map(|o| o.stat(m)).collect();
                    empirical_quantile(&stats, 1.0 - spec.level)
                }
                None => asymptotic,
            };
            cells.push(summarize(spec, cell, m, &alt, crit)?);
        }
    }
    Ok(ExperimentResult { spec: spec.clone(), cells, version: env!("CARGO_PKG_VERSION").into() })
}

/// One `(n, d)` cell of the calibration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCell {
    pub n: usize,
    pub d: usize,
    pub benchmark_frequency: f64,
    /// SLRT rejection frequency for each candidate penalty.
    pub slrt_frequencies: Vec<f64>,
    /// Smallest admissible candidate, `None` if unresolved.
    pub selected_pen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub cells: Vec<CalibrationCell>,
    pub candidate_pens: Vec<f64>,
    /// Fitted intercept and slope of `p = a + b n^(7/8) sqrt(ln d)`.
    pub a: f64,
    pub b: f64,
    pub warnings: Vec<String>,
}

/// Regressor of the tuning formula.
pub fn formula_regressor(n: usize, d: usize) -> f64 {
    (n as f64).powf(0.875) * (d as f64).ln().sqrt()
}

/// Least squares of `p` on `(1, n^(7/8) sqrt(ln d))`.
pub fn fit_formula(points: &[(usize, usize, f64)]) -> Result<(f64, f64)> {
    let m = points.len();
    if m < 2 {
        return Err(Error::Domain("need at least two resolved cells".into()));
    }
    let design: Vec<f64> = points.iter().flat_map(|&(n, d, _)| [1.0, formula_regressor(n, d)]).collect();
    let resp: Vec<f64> = points.iter().map(|p| p.2).collect();
    let coef = lstsq_qr(&design, m, 2, &resp, 1e-10)
        .ok_or_else(|| Error::Domain("calibration cells do not identify the slope".into()))?;
    Ok((coef[0], coef[1]))
}

/// Smallest candidate whose frequency lies within `window` of the benchmark.
pub fn select_pen(candidates: &[f64], freqs: &[f64], benchmark: f64, window: f64) -> Option<f64> {
    candidates
        .iter()
        .zip(freqs)
        .find(|(_, &f)| (f - benchmark).abs() <= window)
        .map(|(&p, _)| p)
}

/// Reruns the penalty calibration on Setting I null data.
pub fn calibrate_formula(spec: &ExperimentSpec) -> Result<CalibrationResult> {
    spec.validate()?;
    let crit = half_chisq_critical(spec.level)?;
    let pool = worker_pool()?;
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    for &n in &spec.ns {
        // the benchmark ignores Z, and null datasets share (y, X, D) across d
        let bench_cell = CellDesign { setting: Setting::I, n, d: spec.ds[0] };
        let bench_spec = ExperimentSpec { pen_rule: PenRule::BenchmarkZero, ..spec.clone() };
        let bench = simulate_cell(&bench_spec, bench_cell, Phase::Null)?;
        let bench_freq = summarize(spec, bench_cell, Method::Benchmark, &bench, crit)?.rejection_frequency;

        for &d in &spec.ds {
            let cell = CellDesign { setting: Setting::I, n, d };
            let per_rep: Vec<Vec<Option<f64>>> = pool.install(|| {
                (0..spec.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let dgp = replication_dgp(spec, cell, Phase::Null, rep);
                        let ds = gen_dataset::<f64>(&dgp)?;
                        let em = em_for_rep(spec, dgp.stream);
                        Ok(spec
                            .candidate_pens
                            .iter()
                            .map(|&p| compute_slrt(&ds, p, spec.level, &em).ok().map(|o| o.slrt))
                            .collect())
                    })
                    .collect::<Result<_>>()
            })?;
            let mut freqs = Vec::with_capacity(spec.candidate_pens.len());
            for k in 0..spec.candidate_pens.len() {
                let stats: Vec<f64> = per_rep.iter().filter_map(|r| r[k]).collect();
                let failures = spec.reps - stats.len();
                if failures as f64 > MAX_FAILURE_RATE * spec.reps as f64 {
                    return Err(Error::Experiment(format!("n={n} d={d}: {failures} failed fits")));
                }
                freqs.push(stats.iter().filter(|&&s| s > crit).count() as f64 / stats.len().max(1) as f64);
            }
            let selected = select_pen(&spec.candidate_pens, &freqs, bench_freq, spec.window);
            if selected.is_none() {
                warnings.push(format!("n={n} d={d}: no candidate within {} of benchmark {bench_freq}", spec.window));
            }
            cells.push(CalibrationCell {
                n,
                d,
                benchmark_frequency: bench_freq,
                slrt_frequencies: freqs,
                selected_pen: selected,
            });
        }
    }
    let points: Vec<(usize, usize, f64)> =
        cells.iter().filter_map(|c| c.selected_pen.map(|p| (c.n, c.d, p))).collect();
    let (a, b) = match fit_formula(&points) {
        Ok(ab) => ab,
        Err(e) => {
            warnings.push(format!("regression skipped: {e}"));
            (f64::NAN, f64::NAN)
        }
    };
    Ok(CalibrationResult { cells, candidate_pens: spec.candidate_pens.clone(), a, b, warnings })
}

pub const TABLE_HEADER: &str = "setting,n,d,method,level,frequency,stderr,reps,seed";

impl ExperimentResult {
    /// Machine-readable table, full precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TABLE_HEADER);
        s.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                c.setting, c.n, c.d, c.method, c.level, c.rejection_frequency, c.mc_stderr, c.reps, self.spec.seed
            );
        }
        s
    }

    /// One flat `key=value` line per cell. Runtimes are omitted unless
    /// asked for, since they are the only nondeterministic quantity.
    pub fn to_records(&self, with_timing: bool) -> String {
        let kind = match self.spec.kind {
            ExperimentKind::Size => "size",
            ExperimentKind::Power => "power",
            ExperimentKind::Calibrate => "calibrate",
        };
        let mut s = String::new();
        for c in &self.cells {
            let _ = write!(
                s,
                "kind={kind} setting={} n={} d={} method={} level={} frequency={} stderr={} critical_value={} reps={} failures={} seed={} pen_rule={} size_adjust={} version={}",
                c.setting,
                c.n,
                c.d,
                c.method,
                c.level,
                c.rejection_frequency,
                c.mc_stderr,
                c.critical_value,
                c.reps,
                c.failures,
                self.spec.seed,
                self.spec.pen_rule,
                self.spec.size_adjust,
                self.version
            );
            if let Some(p) = c.pen {
                let _ = write!(s, " pen={p}");
            }
            if with_timing {
                let _ = write!(s, " mean_runtime={}", c.mean_runtime);
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable layout: one block per `d`, rows by `n`, a
    /// `B(setting)` / `S(setting)` column pair per setting.
    pub fn to_table(&self) -> String {
        let title = match self.spec.kind {
            ExperimentKind::Power if self.spec.size_adjust => "Size-adjusted Power",
            ExperimentKind::Power => "Power",
            _ => "Type I Error",
        };
        let mut s = format!("{title} (level {}, reps {})\n", self.spec.level, self.spec.reps);
        let mut ds: Vec<usize> = self.cells.iter().map(|c| c.d).collect();
        ds.sort_unstable();
        ds.dedup();
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut cols: Vec<(Setting, Method)> = self.cells.iter().map(|c| (c.setting, c.method)).collect();
        cols.sort();
        cols.dedup();
        for d in ds {
            let _ = writeln!(s, "d = {d}");
            let _ = write!(s, "{:>10}", "");
            for (set, m) in &cols {
                let tag = if *m == Method::Slrt { "S" } else { "B" };
                let _ = write!(s, " {:>8}", format!("{tag}({set})"));
            }
            s.push('\n');
            for &n in &ns {
                let _ = write!(s, "{:>10}", format!("n = {n}"));
                for (set, m) in &cols {
                    match self.cells.iter().find(|c| c.n == n && c.d == d && c.setting == *set && c.method == *m) {
                        Some(c) => {
                            let _ = write!(s, " {:>8.4}", c.rejection_frequency);
                        }
                        None => {
                            let _ = write!(s, " {:>8}", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

impl CalibrationResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,d,benchmark_frequency,selected_pen\n");
        for c in &self.cells {
            let sel = c.selected_pen.map_or_else(|| "NA".to_string(), |p| p.to_string());
            let _ = writeln!(s, "{},{},{},{}", c.n, c.d, c.benchmark_frequency, sel);
        }
        s
    }

    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            let freqs = c.slrt_frequencies.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
            let sel = c.selected_pen.map_or_else(|| "NA".to_string(), |p| p.to_string());
            let _ = writeln!(
                s,
                "kind=calibrate n={} d={} benchmark_frequency={} selected_pen={} slrt_frequencies={}",
                c.n, c.d, c.benchmark_frequency, sel, freqs
            );
        }
        let _ = writeln!(s, "kind=calibrate_fit a={} b={}", self.a, self.b);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_response_gives_zero_slope() {
        let pts = [(100, 10, 5.0), (500, 10, 5.0), (1000, 50, 5.0), (250, 100, 5.0)];
        let (a, b) = fit_formula(&pts).unwrap();
        assert!((a - 5.0).abs() < 1e-10);
        assert!(b.abs() < 1e-12);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut pts = Vec::new();
        for n in [100, 250, 500, 750, 1000] {
            for d in [10, 25, 50, 75, 100] {
                pts.push((n, d, 6.3383 + 0.0086 * formula_regressor(n, d)));
            }
        }
        let (a, b) = fit_formula(&pts).unwrap();
        assert!((a - 6.3383).abs() < 5e-5);
        assert!((b - 0.0086).abs() < 5e-5);
    }

    #[test]
    fn two_cells_interpolate_exactly() {
        let pts = [(100, 10, 7.0), (1000, 50, 12.0)];
        let (a, b) = fit_formula(&pts).unwrap();
        for &(n, d, p) in &pts {
            assert!((a + b * formula_regressor(n, d) - p).abs() < 1e-10);
        }
        assert!(fit_formula(&[(100, 10, 1.0)]).is_err());
        assert!(fit_formula(&[(100, 10, 1.0), (100, 10, 2.0)]).is_err());
    }

    #[test]
    fn selection_takes_smallest_admissible() {
        let pens = [1.0, 2.0, 3.0, 4.0];
        let freqs = [0.09, 0.06, 0.052, 0.051];
        assert_eq!(select_pen(&pens, &freqs, 0.05, 0.003), Some(3.0));
        assert_eq!(select_pen(&pens, &freqs, 0.02, 0.003), None);
    }

    #[test]
    fn quantile_type7() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
        assert_eq!(empirical_quantile(&v, 1.0), 4.0);
        assert!((empirical_quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn pen_rule_parsing() {
        assert_eq!("formula".parse::<PenRule>().unwrap(), PenRule::Formula(LogBase::Natural));
        assert_eq!("fixed:3.5".parse::<PenRule>().unwrap(), PenRule::Fixed(3.5));
        assert_eq!("fixed(2)".parse::<PenRule>().unwrap(), PenRule::Fixed(2.0));
        assert_eq!("benchmark_zero".parse::<PenRule>().unwrap(), PenRule::BenchmarkZero);
        assert!("lasso".parse::<PenRule>().is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "# power run\nkind = power\nsettings = I, III\nns = 500,1000\nds = 10\nreps = 50\nseed = 7\npen_rule = fixed:4\nsize_adjust = true\n";
        let spec = ExperimentSpec::from_config_str(text).unwrap();
        assert_eq!(spec.settings, vec![Setting::I, Setting::III]);
        assert_eq!(spec.ns, vec![500, 1000]);
        assert_eq!(spec.pen_rule, PenRule::Fixed(4.0));
        let again = ExperimentSpec::from_config_str(&spec.to_config_string()).unwrap();
        assert_eq!(again, spec);
        assert!(ExperimentSpec::from_config_str("kind = size\nbogus = 1\n").is_err());
        assert!(ExperimentSpec::from_config_str("kind = size\nlevel = 0.6\n").is_err());
        assert!(ExperimentSpec::from_config_str("ns = 5\n").is_err());
    }
}
