use slrt::experiment::{
    empirical_quantile, run_power, run_size, simulate_cell, CellDesign, ExperimentKind, ExperimentSpec, Method, Phase,
};
use slrt::{PenRule, Setting};

fn small(kind: ExperimentKind, reps: usize) -> ExperimentSpec {
    ExperimentSpec { ns: vec![120], ds: vec![3], reps, seed: 9, ..ExperimentSpec::new(kind) }
}

#[test]
fn single_replication_is_degenerate() {
    let res = run_size(&small(ExperimentKind::Size, 1)).unwrap();
    assert_eq!(res.cells.len(), 2);
    for c in &res.cells {
        assert!(c.rejection_frequency == 0.0 || c.rejection_frequency == 1.0);
        assert_eq!(c.mc_stderr, 0.0);
        assert_eq!(c.reps, 1);
    }
}

#[test]
fn stderr_matches_binomial_formula() {
    let res = run_size(&small(ExperimentKind::Size, 40)).unwrap();
    for c in &res.cells {
        let f = c.rejection_frequency;
        assert!((0.0..=1.0).contains(&f));
        assert!((c.mc_stderr - (f * (1.0 - f) / c.reps as f64).sqrt()).abs() < 1e-15);
    }
}

#[test]
fn power_uses_paired_null_quantiles() {
    let spec = small(ExperimentKind::Power, 30);
    let res = run_power(&spec).unwrap();
    let cell = CellDesign { setting: Setting::I, n: 120, d: 3 };
    let null = simulate_cell(&spec, cell, Phase::Null).unwrap();
    let alt = simulate_cell(&spec, cell, Phase::Alternative).unwrap();
    for m in [Method::Benchmark, Method::Slrt] {
        let stats: Vec<f64> = null.iter().filter_map(|o| o.stat(m)).collect();
        let crit = empirical_quantile(&stats, 0.95);
        let alt_stats: Vec<f64> = alt.iter().filter_map(|o| o.stat(m)).collect();
        let f = alt_stats.iter().filter(|&&s| s > crit).count() as f64 / alt_stats.len() as f64;
        let c = res.cells.iter().find(|c| c.method == m).unwrap();
        assert_eq!(c.critical_value, crit);
        assert_eq!(c.rejection_frequency, f);
    }
}

#[test]
fn null_phase_prefix_is_shared_across_rep_counts() {
    let cell = CellDesign { setting: Setting::III, n: 100, d: 3 };
    let short = simulate_cell(&small(ExperimentKind::Size, 5), cell, Phase::Null).unwrap();
    let long = simulate_cell(&small(ExperimentKind::Size, 9), cell, Phase::Null).unwrap();
    for (a, b) in short.iter().zip(&long) {
        assert_eq!(a.slrt, b.slrt);
        assert_eq!(a.benchmark, b.benchmark);
    }
}

#[test]
fn adding_cells_leaves_existing_cells_unchanged() {
    let one = run_size(&small(ExperimentKind::Size, 12)).unwrap();
    let mut spec = small(ExperimentKind::Size, 12);
    spec.ns = vec![80, 120];
    spec.settings = vec![Setting::I, Setting::II];
    let many = run_size(&spec).unwrap();
    for c in &one.cells {
        let same = many.cells.iter().find(|m| m.n == c.n && m.setting == c.setting && m.method == c.method).unwrap();
        assert_eq!(same.rejection_frequency, c.rejection_frequency);
    }
}

#[test]
fn zero_lift_power_is_size() {
    // lambda_true = 0 makes the alternative a null model
    let mut spec = small(ExperimentKind::Power, 300);
    spec.lambda_true = 0.0;
    spec.size_adjust = false;
    let res = run_power(&spec).unwrap();
    for c in &res.cells {
        let se = (0.05f64 * 0.95 / c.reps as f64).sqrt();
        assert!((c.rejection_frequency - 0.05).abs() <= 3.0 * se, "{:?}", c);
    }
}

#[test]
fn benchmark_only_rule_skips_slrt() {
    let mut spec = small(ExperimentKind::Size, 4);
    spec.pen_rule = PenRule::BenchmarkZero;
    let res = run_size(&spec).unwrap();
    assert!(res.cells.iter().all(|c| c.method == Method::Benchmark));
    assert!(res.to_csv().lines().count() == 2);
}
