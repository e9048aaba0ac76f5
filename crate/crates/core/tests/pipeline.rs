use slrt::ingest::ingest_reader;
use slrt::{
    compute_slrt, gen_dataset, half_chisq_critical, tuning_pen, write_dataset_csv, CsvSchema, Dataset64, DgpSpec,
    EmConfig64, Setting,
};

#[test]
fn exported_dataset_gives_the_same_test() {
    let ds: Dataset64 = gen_dataset(&DgpSpec::alternative(Setting::II, 250, 4, 3)).unwrap();
    let mut buf = Vec::new();
    write_dataset_csv(&ds, &mut buf).unwrap();
    let back = ingest_reader::<f64, _>(buf.as_slice(), &CsvSchema::for_export(ds.q(), ds.dz())).unwrap().dataset;
    assert_eq!(back, ds);
    let cfg = EmConfig64::default();
    let pen = tuning_pen(ds.n(), ds.dz()).unwrap();
    let a = compute_slrt(&ds, pen, 0.05, &cfg).unwrap();
    let b = compute_slrt(&back, pen, 0.05, &cfg).unwrap();
    assert_eq!(a.slrt, b.slrt);
    assert_eq!(a.reject, a.slrt > half_chisq_critical(0.05).unwrap());
}

#[test]
fn strong_subgroup_is_detected_in_every_setting() {
    for setting in [Setting::I, Setting::II, Setting::III, Setting::IV] {
        let mut spec = DgpSpec::alternative(setting, 800, 5, 12);
        spec.lambda_true = 2.0;
        let ds: Dataset64 = gen_dataset(&spec).unwrap();
        let out = compute_slrt(&ds, tuning_pen(800, 5).unwrap(), 0.05, &EmConfig64::default()).unwrap();
        assert!(out.reject, "{setting}: slrt {}", out.slrt);
        assert!(out.alt_fit.params.lambda > 1.0);
    }
}

#[test]
fn statistic_is_invariant_to_shifting_y() {
    let ds: Dataset64 = gen_dataset(&DgpSpec::alternative(Setting::I, 300, 3, 8)).unwrap();
    let shifted = Dataset64::new(
        ds.y().iter().map(|v| v + 100.0).collect(),
        ds.x().to_vec(),
        ds.q(),
        ds.d().to_vec(),
        ds.z().to_vec(),
        ds.dz(),
    )
    .unwrap();
    let cfg = EmConfig64::default();
    let a = compute_slrt(&ds, 7.0, 0.05, &cfg).unwrap();
    let b = compute_slrt(&shifted, 7.0, 0.05, &cfg).unwrap();
    assert!((a.slrt - b.slrt).abs() < 1e-4, "{} vs {}", a.slrt, b.slrt);
}
