use fairboost::experiment::{grid_cells, render_report, run_cell, run_grid, CellId, ExperimentConfig, GridResults, ReportFormat};
use fairboost::stats::{compare_conditions, Direction, SampleSet};

fn german() -> String {
    format!("{}/../../data/german.csv", env!("CARGO_MANIFEST_DIR"))
}

fn config(n_seeds: usize, include: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
        n_seeds = {n_seeds}
        master_seed = 7
        [preprocessors]
        include = [{include}]
        [[models]]
        type = "logistic"
        [ensembles]
        pairs = true
        all = false
        [[datasets]]
        preset = "german"
        path = "{path}"
        {extra}
        "#,
        path = german()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn baseline_only_grid_has_one_cell_per_seed_count() {
    let cfg = config(10, "", "");
    let results = run_grid(&cfg, 1).unwrap();
    assert_eq!(results.cells.len(), 1);
    let cell = &results.cells[0];
    assert!(cell.id.is_baseline());
    assert_eq!(cell.reports.len(), 10);
    assert!(cell.failures.is_empty());
    assert!(cell.comparisons.is_empty());
    let indices: Vec<usize> = cell.reports.iter().map(|r| r.seed_index).collect();
    assert_eq!(indices, (0..10).collect::<Vec<_>>());
    let mean = cell.values("ndi").iter().sum::<f64>() / 10.0;
    assert!((cell.mean_ndi.unwrap() - mean).abs() < 1e-12);
}

#[test]
fn seeds_change_the_split() {
    let results = run_grid(&config(3, "", ""), 1).unwrap();
    let f1 = results.cells[0].values("f1");
    assert!(f1.windows(2).any(|w| w[0] != w[1]), "{f1:?}");
}

#[test]
fn json_round_trip_is_byte_identical() {
    let results = run_grid(&config(2, r#""rw", "op""#, ""), 1).unwrap();
    let first = render_report(&results, ReportFormat::Json).unwrap();
    let back = GridResults::from_json(&first).unwrap();
    let second = render_report(&back, ReportFormat::Json).unwrap();
    assert_eq!(first, second);
}

#[test]
fn grid_is_independent_of_thread_count() {
    let cfg = config(3, r#""rw""#, "");
    let a = render_report(&run_grid(&cfg, 1).unwrap(), ReportFormat::Json).unwrap();
    let b = render_report(&run_grid(&cfg, 3).unwrap(), ReportFormat::Json).unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_cell_reproduces_grid_values() {
    let cfg = config(2, r#""rw", "op""#, "");
    let results = run_grid(&cfg, 1).unwrap();
    let cells = grid_cells(&cfg, "german", "logistic");
    assert_eq!(cells.len(), 4);
    for id in &cells {
        let cell = results.cell(id).unwrap();
        for r in &cell.reports {
            let report = run_cell(&cfg, id, r.seed_index).unwrap();
            assert_eq!(report, r.report, "{id} seed {}", r.seed_index);
        }
    }
}

#[test]
fn lfr_failure_is_recorded_not_fatal() {
    // No label term and a dominant parity term: every row gets the same label.
    let cfg = config(2, r#""lfr", "rw""#, "lfr = { a_y = 0.0, a_z = 1000.0, max_iter = 50 }");
    let results = run_grid(&cfg, 1).unwrap();
    let lfr = results.cell(&CellId::single("german", "logistic", "lfr")).unwrap();
    assert!(lfr.reports.is_empty());
    assert_eq!(lfr.failures.len(), 2);
    assert!(lfr.failures.iter().all(|f| f.kind == "degenerate_labels"), "{:?}", lfr.failures);
    assert!(lfr.mean_ndi.is_none());
    let cmp = lfr.comparison("Baseline", "ndi").unwrap();
    assert!(cmp.test.is_none());
    assert_eq!(cmp.verdict, Direction::None);

    let rw = results.cell(&CellId::single("german", "logistic", "rw")).unwrap();
    assert_eq!(rw.reports.len(), 2);
    let pair = results
        .cells
        .iter()
        .find(|c| c.id.combiner.is_some())
        .unwrap();
    assert_eq!(pair.failures.len(), 2);
    assert!(pair.failures.iter().all(|f| f.kind == "member"));
    let err = run_cell(&cfg, &lfr.id, 0).unwrap_err();
    assert_eq!(err.kind(), "cell");
    assert!(err.to_string().contains("german"), "{err}");
}

#[test]
fn identical_samples_are_never_significant() {
    let a = SampleSet::new("f1", "a", vec![0.7; 10]);
    let b = SampleSet::new("f1", "b", vec![0.7; 10]);
    let t = compare_conditions(&a, &b, 0.05).unwrap();
    assert!(!t.significant);
    assert_eq!(t.direction, Direction::None);
}

#[test]
fn empty_results_render() {
    let mut results = run_grid(&config(1, "", ""), 1).unwrap();
    results.cells.clear();
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        let text = render_report(&results, format).unwrap();
        assert!(!text.is_empty());
    }
    let csv = render_report(&results, ReportFormat::Csv).unwrap();
    assert_eq!(csv.lines().count(), 1);
}
