//! `slrt`: subgroup test on a CSV file, Monte Carlo size/power studies,
//! penalty calibration and synthetic data export.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slrt::experiment::{calibrate_formula, run_power, run_size, ExperimentKind, ExperimentSpec};
use slrt::{
    compute_slrt, gen_dataset, ingest_csv, tuning_pen_with, write_dataset_csv, CsvSchema, Dataset64, DgpSpec,
    EmConfig64, Error, ErrorClass, LogBase, Setting, TestOutcome64,
};

#[derive(Parser, Debug)]
#[command(name = "slrt", version, about = "Shrinkage likelihood ratio test for a treatment-effect subgroup")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a CSV dataset for a subgroup with an enhanced treatment effect.
    Test(TestArgs),
    /// Monte Carlo type I error of the SLRT and the benchmark test.
    SimulateSize(SimArgs),
    /// Monte Carlo power (size-adjusted by default).
    SimulatePower(SimArgs),
    /// Re-derive the tuning formula coefficients on Setting I null data.
    Calibrate(SimArgs),
    /// Write one synthetic dataset as CSV.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Response column.
    #[arg(long)]
    y: String,
    /// Treatment column.
    #[arg(long)]
    d: String,
    /// Comma-separated covariates for the outcome model.
    #[arg(long, value_delimiter = ',')]
    x: Vec<String>,
    /// Comma-separated covariates for the membership model.
    #[arg(long, value_delimiter = ',')]
    z: Vec<String>,
    #[arg(long)]
    standardize_z: bool,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Penalty; defaults to the tuning formula for this n and d.
    #[arg(long)]
    pen: Option<f64>,
    /// Use log10 instead of ln in the tuning formula.
    #[arg(long)]
    log10: bool,
    #[arg(long, default_value_t = 5)]
    n_starts: usize,
    #[arg(long, default_value_t = 0)]
    em_seed: u64,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// `key = value` config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated settings (I, II, III, IV).
    #[arg(long)]
    setting: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated Z dimensions (intercept included).
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    level: Option<String>,
    /// formula, formula_log10, fixed:VALUE or benchmark_zero.
    #[arg(long)]
    pen_rule: Option<String>,
    /// Power only: true for empirical null critical values.
    #[arg(long)]
    size_adjust: Option<String>,
    #[arg(long)]
    lambda_true: Option<String>,
    /// Calibration only: comma-separated ascending penalties.
    #[arg(long)]
    candidate_pens: Option<String>,
    /// Calibration only.
    #[arg(long)]
    window: Option<String>,
    /// Write the CSV result table here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print one key=value record per cell.
    #[arg(long)]
    records: bool,
    /// Include mean runtimes in the records.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value = "I")]
    setting: Setting,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 20)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Draw from the alternative (subgroup present).
    #[arg(long)]
    alternative: bool,
    #[arg(long, default_value_t = 1.0)]
    lambda_true: f64,
    /// Destination file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> slrt::Result<()> {
    match cli.command {
        Command::Test(a) => run_test(a),
        Command::SimulateSize(a) => run_sim(ExperimentKind::Size, a),
        Command::SimulatePower(a) => run_sim(ExperimentKind::Power, a),
        Command::Calibrate(a) => run_sim(ExperimentKind::Calibrate, a),
        Command::Gen(a) => run_gen(a),
    }
}

fn run_test(a: TestArgs) -> slrt::Result<()> {
    let schema = CsvSchema {
        y_col: a.y,
        d_col: a.d,
        x_cols: a.x,
        z_cols: a.z,
        standardize_z: a.standardize_z,
    };
    let ingested = ingest_csv::<f64>(&a.input, &schema)?;
    let ds = ingested.dataset;
    let pen = match a.pen {
        Some(p) => p,
        None => {
            let base = if a.log10 { LogBase::Ten } else { LogBase::Natural };
            tuning_pen_with(ds.n(), ds.dz(), base)?
        }
    };
    let cfg = EmConfig64 { n_starts: a.n_starts, seed: a.em_seed, ..EmConfig64::default() };
    let out = compute_slrt(&ds, pen, a.level, &cfg)?;
    print!("{}", test_report(&ds, ingested.dropped_rows, &out));
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn test_report(ds: &Dataset64, dropped: usize, out: &TestOutcome64) -> String {
    let decision = if out.reject { "reject" } else { "retain" };
    let alt = &out.alt_fit;
    let mut s = String::new();
    let _ = writeln!(s, "n = {} (dropped {dropped}), q = {}, dz = {}", ds.n(), ds.q(), ds.dz());
    let _ = writeln!(s, "{:<12} {:>14}", "slrt", format!("{:.6}", out.slrt));
    let _ = writeln!(s, "{:<12} {:>14}", "p-value", format!("{:.4}", out.p_value));
    let _ = writeln!(s, "{:<12} {:>14}", "pen", format!("{:.4}", out.pen_used));
    let _ = writeln!(s, "{:<12} {:>14}", "level", out.level);
    let _ = writeln!(s, "{:<12} {:>14}", "decision", decision);
    let _ = writeln!(s, "{:<12} {:>14}", "lambda", format!("{:.4}", alt.params.lambda));
    let _ = writeln!(s, "{:<12} {:>14}", "beta", format!("{:.4}", alt.params.beta));
    let _ = writeln!(
        s,
        "record slrt={} p_value={} pen={} level={} decision={decision} loglik_alt={} loglik_null={} \
         alpha={} beta={} lambda={} sigma2={} gamma={} null_alpha={} null_beta={} null_sigma2={} \
         iterations={} converged={} n={} dropped={dropped}",
        out.slrt,
        out.p_value,
        out.pen_used,
        out.level,
        alt.loglik,
        out.null_loglik,
        fmt_vec(&alt.params.alpha),
        alt.params.beta,
        alt.params.lambda,
        alt.params.sigma2,
        fmt_vec(&alt.params.gamma),
        fmt_vec(&out.null_fit.alpha),
        out.null_fit.beta,
        out.null_fit.sigma2,
        alt.iterations,
        alt.converged,
        ds.n(),
    );
    s
}

fn build_spec(kind: ExperimentKind, a: &SimArgs) -> slrt::Result<ExperimentSpec> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut spec = ExperimentSpec::new(kind);
            // the file may omit `kind`; the subcommand decides it
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
                let k = k.trim();
                if k == "kind" {
                    if v.trim().parse::<ExperimentKind>()? != kind {
                        return Err(Error::Config(format!("config kind `{}` does not match the subcommand", v.trim())));
                    }
                    continue;
                }
                spec.set(k, v.trim())?;
            }
            spec
        }
        None => ExperimentSpec::new(kind),
    };
    let flags = [
        ("settings", &a.setting),
        ("ns", &a.n),
        ("ds", &a.d),
        ("reps", &a.reps),
        ("seed", &a.seed),
        ("level", &a.level),
        ("pen_rule", &a.pen_rule),
        ("size_adjust", &a.size_adjust),
        ("lambda_true", &a.lambda_true),
        ("candidate_pens", &a.candidate_pens),
        ("window", &a.window),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn run_sim(kind: ExperimentKind, a: SimArgs) -> slrt::Result<()> {
    let spec = build_spec(kind, &a)?;
    let (table, csv, records) = match kind {
        ExperimentKind::Size | ExperimentKind::Power => {
            let res = if kind == ExperimentKind::Size { run_size(&spec)? } else { run_power(&spec)? };
            (res.to_table(), res.to_csv(), res.to_records(a.timing))
        }
        ExperimentKind::Calibrate => {
            let res = calibrate_formula(&spec)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            let table = format!("fitted pen = {} + {} n^(7/8) sqrt(ln d)\n{}", res.a, res.b, res.to_csv());
            (table, res.to_csv(), res.to_records())
        }
    };
    print!("{table}");
    if a.records {
        print!("{records}");
    }
    if let Some(path) = &a.output {
        std::fs::write(path, csv)?;
    }
    Ok(())
}

fn run_gen(a: GenArgs) -> slrt::Result<()> {
    let mut spec =
        if a.alternative { DgpSpec::alternative(a.setting, a.n, a.d, a.seed) } else { DgpSpec::null(a.setting, a.n, a.d, a.seed) };
    spec.stream = a.stream;
    spec.lambda_true = a.lambda_true;
    let ds: Dataset64 = gen_dataset(&spec)?;
    match &a.output {
        Some(path) => write_dataset_csv(&ds, std::fs::File::create(path)?),
        None => write_dataset_csv(&ds, std::io::stdout().lock()),
    }
}
