use crashdrl::drl::{estimate_grid, CateGrid, DrlConfig};
use crashdrl::ingest::{
    aggregate_cells, build_panel, filter_sutva, interpolate_gaps, parse_alignment, parse_crashes, parse_traffic,
    AggregateConfig, PanelConfig,
};
use crashdrl::learners::{LearnerKind, LearnerSpec, Task};
use crashdrl::synth::{
    generate, generate_raw, oracle_ate, read_hidden_csv, write_hidden_csv, Preset, RawConfig, SynthConfig,
};
use crashdrl::validate::{validate_grid, MatchConfig, Validator};
use crashdrl::{CrashType, Panel, Scenario};

fn cheap(b: usize) -> DrlConfig {
    DrlConfig {
        propensity: LearnerSpec::new(LearnerKind::LogisticRegression, Task::Classification),
        outcome: LearnerSpec::new(LearnerKind::LinearRegression, Task::Regression),
        bootstrap_b: b,
        ..DrlConfig::default()
    }
}

#[test]
fn synthetic_panel_survives_disk_and_estimates_track_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::preset(Preset::ConfoundedHeterogeneous, 3000, 8);
    cfg.scenarios = Scenario::cross(&[5, 20], &[0, -2]);
    let panel = generate(&cfg).unwrap();
    panel.write_csv(&dir.path().join("panel.csv")).unwrap();
    write_hidden_csv(&panel, &dir.path().join("hidden.csv")).unwrap();
    let mut back = Panel::read_csv(&dir.path().join("panel.csv")).unwrap();
    read_hidden_csv(&mut back, &dir.path().join("hidden.csv")).unwrap();
    assert_eq!(back, panel);

    let vars = panel.feature_names.clone();
    let grid = estimate_grid(&back, &CrashType::ALL, &cfg.scenarios, &vars, &cheap(50), 1).unwrap();
    for r in &grid.results {
        let truth = oracle_ate(&back, r.crash_type, r.scenario).unwrap();
        let ate = r.ate.unwrap();
        assert!((ate - truth).abs() < 1.0, "{:?} {:?}: {ate} vs {truth}", r.crash_type, r.scenario);
        let iv = r.interval.unwrap();
        assert!(iv.low <= ate && ate <= iv.high);
    }
    let report = validate_grid(&back, &grid, Validator::Oracle).unwrap();
    assert!(report.overall.mae < 1.0, "{}", report.overall.mae);

    grid.write_json(&dir.path().join("grid.json")).unwrap();
    grid.write_ice_csv(&dir.path().join("ice.csv")).unwrap();
    let mut again = CateGrid::read_json(&dir.path().join("grid.json")).unwrap();
    again.attach_ice_csv(&dir.path().join("ice.csv"), &back).unwrap();
    let r2 = validate_grid(&back, &again, Validator::Oracle).unwrap();
    assert_eq!(r2.overall, report.overall);
}

#[test]
fn raw_tables_to_matched_validation() {
    let dir = tempfile::tempdir().unwrap();
    let raw = generate_raw(&RawConfig { seed: 4, n_crashes: 40, ..RawConfig::default() }).unwrap();
    raw.write(dir.path()).unwrap();
    let t = parse_traffic(&dir.path().join("traffic.csv")).unwrap();
    let c = parse_crashes(&dir.path().join("crashes.csv")).unwrap();
    let a = parse_alignment(&dir.path().join("alignment.csv")).unwrap();
    assert!(t.rejects.is_empty() && c.rejects.is_empty() && a.rejects.is_empty());
    let grid = interpolate_gaps(&aggregate_cells(&t.records, &AggregateConfig::default()).unwrap(), None).unwrap();
    let sutva = filter_sutva(&c.records);
    let scenarios = Scenario::cross(&[5, 10], &[0, -1]);
    let pc = PanelConfig { scenarios: scenarios.clone(), ..PanelConfig::default() };
    let built = build_panel(&grid, &sutva, &a.records, &pc, 4).unwrap();
    let again = build_panel(&grid, &sutva, &a.records, &pc, 4).unwrap();
    assert_eq!(built.panel, again.panel);
    assert!(!built.pool.is_empty());
    assert!(built.panel.rows.iter().any(|r| r.treatment.is_some()));

    let vars: Vec<String> = ["spd", "occ", "vol", "ci"].iter().map(|s| s.to_string()).collect();
    let cfg = DrlConfig { min_rows: 10, ..cheap(0) };
    let est = estimate_grid(&built.panel, &[CrashType::Rear], &scenarios, &vars, &cfg, 4).unwrap();
    let at_crash = est.get(CrashType::Rear, Scenario::new(5, 0)).unwrap();
    assert!(at_crash.available);
    assert!(at_crash.ate.unwrap() < -3.0, "{:?}", at_crash.ate);
    let v = Validator::Matched { pool: &built.pool, cfg: MatchConfig::default() };
    let report = validate_grid(&built.panel, &est, v).unwrap();
    assert!(report.overall.n > 0);
    assert!(report.records.iter().all(|r| r.n_matches >= 1 && r.n_matches <= 10));
}
