use forkbound::validate::{run_validate, ValidateConfig};

#[test]
fn default_report_passes() {
    let report = run_validate(&ValidateConfig::default()).unwrap();
    for c in &report.checks {
        println!("{} {} {}", c.name, c.passed, c.detail);
    }
    assert!(report.all_passed(), "{}", report.to_csv());
}

#[test]
fn verdicts_stable_across_seeds() {
    for seed in 2..=11 {
        let cfg = ValidateConfig { seed, ..Default::default() };
        let report = run_validate(&cfg).unwrap();
        assert!(report.all_passed(), "seed {seed}\n{}", report.to_csv());
    }
}

#[test]
fn halved_bounds_are_caught() {
    let cfg = ValidateConfig { bound_scale: 0.5, ..Default::default() };
    let report = run_validate(&cfg).unwrap();
    assert!(!report.all_passed());
    assert!(!report.get("forkjoin_k2_tail").unwrap().passed || !report.get("mm1_tail").unwrap().passed);
}

#[test]
fn csv_has_header_and_one_row_per_check() {
    let cfg = ValidateConfig { n_jobs: 20_000, replications: 2_000, ..Default::default() };
    let report = run_validate(&cfg).unwrap();
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# forkbound"));
    assert_eq!(lines[1], "check,status,detail");
    assert_eq!(lines.len(), 2 + report.checks.len());
}
