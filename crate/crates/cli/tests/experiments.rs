use snl_cli::config::ExperimentConfig;
use snl_cli::experiments::{reach_analysis, run_centrality_trace, run_comparison, run_early_termination_study, Start};
use snl_cli::output::load_summary;
use snl_core::Method;

fn tiny(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "trials": 2,
            "base_seed": 7,
            "instance": {{"n": 2, "m": 2, "radius": 1.5}},
            "iterations": 30,
            "warm_start": {{"sd": 0.1}},
            "plateau_window": 10,
            "splitting": {{"max_iter": 60}},
            "early_stop": {{"patience": 10, "halt": false}},
            "output_dir": {:?}
        }}"#,
        dir
    ))
    .unwrap()
}

#[test]
fn comparison_smoke_writes_loadable_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let r = run_comparison(&cfg).unwrap();
    assert_eq!(r.trials.len(), 2);
    assert_eq!(r.summaries.len(), 4);
    for s in &r.summaries {
        assert_eq!(s.median.len(), 30);
        for k in 0..30 {
            assert!(s.q25[k] <= s.median[k] && s.median[k] <= s.q75[k]);
        }
    }
    let rows = load_summary(&dir.path().join("comparison.csv")).unwrap();
    assert_eq!(rows.iter().filter(|r| r.statistic == "median").count(), 4 * 30);
    assert_eq!(rows.iter().filter(|r| r.statistic == "median_reach").count(), 4);
    for f in ["comparison_cold.svg", "comparison_warm.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let reach = reach_analysis(&r, 10, 1.25).unwrap();
    assert!(reach.median(Method::Splitting, Start::Cold).unwrap() <= 30.0);
}

#[test]
fn rerun_with_same_config_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_comparison(&tiny(a.path())).unwrap();
    run_comparison(&tiny(b.path())).unwrap();
    run_early_termination_study(&tiny(a.path())).unwrap();
    run_early_termination_study(&tiny(b.path())).unwrap();
    run_centrality_trace(&tiny(a.path())).unwrap();
    run_centrality_trace(&tiny(b.path())).unwrap();
    for f in ["comparison.csv", "early_stop.csv", "centrality.csv", "centrality.svg"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn early_stop_study_counts_wins() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_early_termination_study(&tiny(dir.path())).unwrap();
    assert_eq!(s.trials.len(), 2);
    assert_eq!(s.wins, s.trials.iter().filter(|t| t.early_wins()).count());
    assert!(s.interval.0 <= s.win_fraction && s.win_fraction <= s.interval.1);
    for t in &s.trials {
        assert!(t.best_iteration >= 1 && t.best_iteration <= t.iterations);
    }
    assert!(load_summary(&dir.path().join("early_stop.csv")).is_ok());
}

#[test]
fn infinite_patience_matches_converged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.output_dir = None;
    cfg.early_stop.patience = usize::MAX;
    let s = run_early_termination_study(&cfg).unwrap();
    for t in &s.trials {
        assert_eq!(t.fired_at, None);
        assert_eq!(t.mean_distance_early, t.mean_distance_converged);
    }
    assert_eq!(s.wins, 0);
}

#[test]
fn centrality_trace_has_one_value_per_iteration() {
    let mut cfg = tiny(std::path::Path::new("."));
    cfg.output_dir = None;
    cfg.trials = 1;
    let c = run_centrality_trace(&cfg).unwrap();
    assert_eq!(c.mean.len(), 30);
    assert!(c.truth.is_finite());
    assert!(c.mean.iter().all(|v| v.is_finite()));
}
