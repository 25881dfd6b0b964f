use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crashdrl::drl::{estimate_grid, CateGrid};
use crashdrl::ingest::{
    aggregate_cells, build_panel, filter_sutva, interpolate_gaps, parse_alignment, parse_crashes, parse_traffic,
};
use crashdrl::learners::{LearnerSpec, RegressionReport, Task};
use crashdrl::selection::{
    apply_threshold, csvi_scores, drop_collinear, pearson_matrix, read_csvi_csv, sweep_threshold, write_csvi_csv,
    SweepErrors,
};
use crashdrl::synth::{generate, generate_raw, read_hidden_csv, write_hidden_csv};
use crashdrl::validate::{
    baseline_estimates, breakdown, compare_methods, match_counterfactuals, overlap_fraction, selection_errors,
    validate_grid, write_breakdown_csv, write_selection_comparison_csv, Validator,
};
use crashdrl::{CrashType, Error, FeatureMatrix, Panel, UnitKey};

use crate::config::{RunConfig, SynthMode, ValidatorChoice};
use crate::manifest::{Manifest, Recorder};
use crate::CliError;

pub const PANEL_CSV: &str = "panel.csv";
pub const POOL_CSV: &str = "pool.csv";
pub const HIDDEN_CSV: &str = "hidden.csv";
pub const SELECTION_JSON: &str = "selected_variables.json";
pub const CSVI_CSV: &str = "csvi.csv";
pub const GRID_JSON: &str = "cate_grid.json";
pub const ICE_CSV: &str = "ice.csv";
pub const RAW_DIR: &str = "raw";

/// Variables chosen by `select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidates: Vec<String>,
    pub dropped_constant: Vec<String>,
    pub after_collinearity: Vec<String>,
    pub epsilon: f64,
    pub protected: Vec<String>,
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub validator: String,
    pub overall: RegressionReport,
    pub skipped: usize,
    pub overlap_fraction: Option<f64>,
}

fn cfg_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

/// Check the config and every explicitly listed input path. Nothing is
/// written when this fails.
pub fn preflight(cfg: &RunConfig) -> Result<u64, CliError> {
    let mut problems = cfg.problems();
    let i = &cfg.input;
    for p in [&i.traffic, &i.crashes, &i.alignment, &i.panel, &i.pool, &i.hidden].into_iter().flatten() {
        if !p.exists() {
            problems.push(format!("input path {} does not exist", p.display()));
        }
    }
    if let Some(p) = cfg.synth.as_ref().and_then(|s| s.spec.as_ref()) {
        if !p.exists() {
            problems.push(format!("synth spec {} does not exist", p.display()));
        }
    }
    if problems.is_empty() {
        cfg.seed()
    } else {
        Err(cfg_err(problems.join("; ")))
    }
}

fn require(p: &Path, hint: &str) -> Result<PathBuf, CliError> {
    if p.exists() {
        Ok(p.to_path_buf())
    } else {
        Err(cfg_err(format!("required input {} does not exist ({hint})", p.display())))
    }
}

fn make_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

struct Paths<'a> {
    cfg: &'a RunConfig,
}

impl Paths<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn panel(&self) -> PathBuf {
        self.cfg.input.panel.clone().unwrap_or_else(|| self.out(PANEL_CSV))
    }

    fn pool(&self) -> PathBuf {
        self.cfg.input.pool.clone().unwrap_or_else(|| self.out(POOL_CSV))
    }

    /// Hidden columns belong to the panel next to them; an explicit panel only
    /// picks them up from an explicit path.
    fn hidden(&self) -> Option<PathBuf> {
        match (&self.cfg.input.hidden, &self.cfg.input.panel) {
            (Some(h), _) => Some(h.clone()),
            (None, None) => Some(self.out(HIDDEN_CSV)).filter(|p| p.exists()),
            (None, Some(_)) => None,
        }
    }

    fn raw(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(RAW_DIR).join(name)
    }
}

fn load_panel(paths: &Paths<'_>, rec: &mut Recorder) -> Result<Panel, CliError> {
    let p = require(&paths.panel(), "run `synth` or `ingest` first")?;
    rec.input(&p);
    let mut panel = Panel::read_csv(&p)?;
    if let Some(h) = paths.hidden() {
        rec.input(&h);
        read_hidden_csv(&mut panel, &h)?;
    }
    Ok(panel)
}

fn load_selection(paths: &Paths<'_>, rec: &mut Recorder) -> Result<Selection, CliError> {
    let p = require(&paths.out(SELECTION_JSON), "run `select` first")?;
    rec.input(&p);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn load_grid(paths: &Paths<'_>, panel: &Panel, rec: &mut Recorder) -> Result<CateGrid, CliError> {
    let g = require(&paths.out(GRID_JSON), "run `estimate` first")?;
    let ice = require(&paths.out(ICE_CSV), "run `estimate` first")?;
    rec.input(&g);
    rec.input(&ice);
    let mut grid = CateGrid::read_json(&g)?;
    grid.attach_ice_csv(&ice, panel)?;
    Ok(grid)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn finish(rec: Recorder, cfg: &RunConfig) -> Result<Manifest, CliError> {
    rec.finish(&cfg.out_dir)
}

/// Generate a synthetic panel with hidden ground truth, or raw tables for `ingest`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let mode = cfg.synth_mode().ok_or_else(|| cfg_err("`synth` needs a [synth] section"))?;
    let paths = Paths { cfg };
    let mut rec = Recorder::new("synth", cfg, seed);
    if let Some(p) = cfg.synth.as_ref().and_then(|s| s.spec.as_ref()) {
        rec.input(p);
    }
    match mode {
        SynthMode::Panel => {
            let sc = cfg.synth_config()?;
            let panel = rec.time("generate", || generate(&sc))?;
            make_out_dir(&cfg.out_dir)?;
            let p = paths.out(PANEL_CSV);
            panel.write_csv(&p)?;
            rec.output(&p);
            let p = paths.out(HIDDEN_CSV);
            write_hidden_csv(&panel, &p)?;
            rec.output(&p);
            let p = paths.out("synth_config.json");
            write_json(&sc, &p)?;
            rec.output(&p);
        }
        SynthMode::Raw => {
            let rc = cfg.raw_config()?;
            let raw = rec.time("generate", || generate_raw(&rc))?;
            let dir = cfg.out_dir.join(RAW_DIR);
            make_out_dir(&dir)?;
            raw.write(&dir)?;
            for name in ["traffic.csv", "crashes.csv", "alignment.csv"] {
                rec.output(&dir.join(name));
            }
        }
    }
    finish(rec, cfg)
}

/// Raw tables to the estimation panel and its validation pool.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let paths = Paths { cfg };
    let traffic = require(&cfg.input.traffic.clone().unwrap_or_else(|| paths.raw("traffic.csv")), "set input.traffic")?;
    let crashes = require(&cfg.input.crashes.clone().unwrap_or_else(|| paths.raw("crashes.csv")), "set input.crashes")?;
    let alignment = cfg.input.alignment.clone().or_else(|| Some(paths.raw("alignment.csv")).filter(|p| p.exists()));
    let mut rec = Recorder::new("ingest", cfg, seed);
    rec.input(&traffic);
    rec.input(&crashes);

    let t = rec.time("parse", || parse_traffic(&traffic))?;
    let c = parse_crashes(&crashes)?;
    let a = match &alignment {
        Some(p) => {
            rec.input(p);
            Some(parse_alignment(p)?)
        }
        None => None,
    };
    let mut grid = rec.time("aggregate", || aggregate_cells(&t.records, &cfg.aggregate_config()))?;
    if cfg.ingest.interpolate {
        grid = interpolate_gaps(&grid, None)?;
    }
    let sutva = filter_sutva(&c.records);
    let points = a.as_ref().map(|a| a.records.as_slice()).unwrap_or_default();
    let built = rec.time("build_panel", || build_panel(&grid, &sutva, points, &cfg.panel_config(), seed))?;

    make_out_dir(&cfg.out_dir)?;
    let p = paths.out(PANEL_CSV);
    built.panel.write_csv(&p)?;
    rec.output(&p);
    let p = paths.out(POOL_CSV);
    built.pool.write_csv(&p)?;
    rec.output(&p);

    let log = paths.out("ingest_log.csv");
    let mut w = csv::Writer::from_path(&log).map_err(Error::from)?;
    w.write_record(["source", "item", "message"]).map_err(Error::from)?;
    let mut log_rows: Vec<[String; 3]> = Vec::new();
    for (src, rejects) in [("traffic", &t.rejects), ("crashes", &c.rejects)]
        .into_iter()
        .chain(a.as_ref().map(|a| ("alignment", &a.rejects)))
    {
        for r in rejects {
            log_rows.push([src.into(), format!("line {}", r.line), r.reason.clone()]);
        }
    }
    for cr in sutva.crashes.iter().filter(|c| !c.is_kept()) {
        log_rows.push(["sutva".into(), cr.id.clone(), format!("{:?}", cr.excluded.as_ref().expect("excluded"))]);
    }
    for wn in &built.warnings {
        log_rows.push(["panel".into(), wn.crash_id.clone(), wn.message.clone()]);
    }
    for r in &log_rows {
        w.write_record(r).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&log, e))?;
    rec.output(&log);
    if !log_rows.is_empty() {
        rec.note(format!("{} rejected rows, exclusions or panel warnings; see ingest_log.csv", log_rows.len()));
    }
    rec.note(format!(
        "{} panel rows, {} pool rows, {} interpolated cells",
        built.panel.len(),
        built.pool.len(),
        grid.interpolated_count()
    ));
    finish(rec, cfg)
}

/// Rows, features, reference outcome and crash indicator used for CSVI.
fn csvi_data(
    panel: &Panel,
    cfg: &RunConfig,
    vars: &[String],
) -> Result<(FeatureMatrix, Vec<f64>, Vec<bool>), CliError> {
    let reference = cfg.reference();
    let si = panel
        .scenario_index(reference)
        .ok_or_else(|| Error::Schema(format!("panel has no reference outcome {}", reference.column())))?;
    let ty: Option<CrashType> = match &cfg.selection.csvi_type {
        Some(t) => Some(t.parse()?),
        None => None,
    };
    let base = match ty {
        Some(ty) => panel.analysis_rows(ty),
        None => (0..panel.len()).collect(),
    };
    let rows: Vec<usize> = base.into_iter().filter(|&r| panel.outcome(r, si).is_some()).collect();
    let y = rows.iter().map(|&r| panel.outcome(r, si).expect("observed")).collect();
    let treated = rows
        .iter()
        .map(|&r| match ty {
            Some(ty) => panel.rows[r].treated_with(ty),
            None => panel.rows[r].treatment.is_some(),
        })
        .collect();
    Ok((panel.matrix(&rows, vars)?, y, treated))
}

/// Collinearity screen, CSVI scores and the thresholded variable set.
pub fn cmd_select(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let paths = Paths { cfg };
    let mut rec = Recorder::new("select", cfg, seed);
    let panel = load_panel(&paths, &mut rec)?;
    let s = &cfg.selection;
    let candidates = s.candidates.clone().unwrap_or_else(|| panel.feature_names.clone());
    let (x_all, y, treated) = csvi_data(&panel, cfg, &candidates)?;
    let corr = pearson_matrix(&x_all, &candidates)?;
    let collinear = drop_collinear(&corr, s.collinearity, &s.priority)?;
    let x = x_all.select_columns(&collinear.kept)?;
    let learner = LearnerSpec::new(s.learner, Task::Regression).with_params(s.params.clone());
    let scores = rec.time("csvi", || csvi_scores(&x, &y, &treated, &learner, &cfg.shap_config(), seed))?;
    let t = apply_threshold(&scores, s.epsilon, &s.protected)?;
    if let Some(w) = &t.warning {
        rec.note(w.clone());
    }
    let selection = Selection {
        candidates,
        dropped_constant: corr.dropped_constant.clone(),
        after_collinearity: collinear.kept.clone(),
        epsilon: s.epsilon,
        protected: s.protected.clone(),
        kept: t.kept,
        removed: t.removed,
        warning: t.warning,
    };

    make_out_dir(&cfg.out_dir)?;
    let p = paths.out("collinearity_log.csv");
    collinear.write_log_csv(&p)?;
    rec.output(&p);
    let p = paths.out(CSVI_CSV);
    write_csvi_csv(&scores, &p)?;
    rec.output(&p);
    let p = paths.out(SELECTION_JSON);
    write_json(&selection, &p)?;
    rec.output(&p);
    finish(rec, cfg)
}

/// Effects over the scenario grid with bootstrap intervals and per-unit ICE.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let paths = Paths { cfg };
    let mut rec = Recorder::new("estimate", cfg, seed);
    let panel = load_panel(&paths, &mut rec)?;
    let sel = load_selection(&paths, &mut rec)?;
    if sel.kept.is_empty() {
        return Err(Error::Empty("selection kept no variables".into()).into());
    }
    let types = cfg.types()?;
    let grid = rec.time("estimate_grid", || {
        estimate_grid(&panel, &types, &cfg.scenarios(), &sel.kept, &cfg.drl_config(), seed)
    })?;
    for r in &grid.results {
        let cell = format!("{} {}", r.crash_type.label(), r.scenario.column());
        if !r.available {
            rec.note(format!("{cell} unavailable: {}", r.note.clone().unwrap_or_default()));
        } else if let Some(n) = &r.note {
            rec.note(format!("{cell}: {n}"));
        }
    }

    make_out_dir(&cfg.out_dir)?;
    let p = paths.out("cate_long.csv");
    grid.write_long_csv(&p)?;
    rec.output(&p);
    let p = paths.out("cate_table.csv");
    grid.write_wide_csv(&p)?;
    rec.output(&p);
    let p = paths.out(ICE_CSV);
    grid.write_ice_csv(&p)?;
    rec.output(&p);
    let p = paths.out(GRID_JSON);
    grid.write_json(&p)?;
    rec.output(&p);
    finish(rec, cfg)
}

fn load_pool(paths: &Paths<'_>, rec: &mut Recorder, needed: bool) -> Result<Option<Panel>, CliError> {
    let p = paths.pool();
    if !p.exists() {
        return if needed {
            Err(cfg_err(format!("matched validation needs the pool {}", p.display())))
        } else {
            Ok(None)
        };
    }
    rec.input(&p);
    Ok(Some(Panel::read_csv(&p)?))
}

fn pick_validator<'a>(cfg: &RunConfig, panel: &Panel, pool: Option<&'a Panel>) -> Result<Validator<'a>, CliError> {
    let matched = |pool: Option<&'a Panel>| {
        pool.map(|pool| Validator::Matched { pool, cfg: cfg.match_config() })
            .ok_or_else(|| cfg_err("matched validation needs a pool panel"))
    };
    match cfg.matching.validator {
        ValidatorChoice::Oracle => Ok(Validator::Oracle),
        ValidatorChoice::Matched => matched(pool),
        ValidatorChoice::Auto if panel.hidden.is_some() => Ok(Validator::Oracle),
        ValidatorChoice::Auto => matched(pool),
    }
}

fn needs_pool(cfg: &RunConfig, panel: &Panel) -> bool {
    match cfg.matching.validator {
        ValidatorChoice::Oracle => false,
        ValidatorChoice::Matched => true,
        ValidatorChoice::Auto => panel.hidden.is_none(),
    }
}

/// Score the ICE against matched (or planted) effects, compare against
/// baseline estimators and against the pre-selection variable set.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let paths = Paths { cfg };
    let mut rec = Recorder::new("validate", cfg, seed);
    let panel = load_panel(&paths, &mut rec)?;
    let grid = load_grid(&paths, &panel, &mut rec)?;
    let sel = if cfg.matching.compare_selection { Some(load_selection(&paths, &mut rec)?) } else { None };
    let pool = load_pool(&paths, &mut rec, needs_pool(cfg, &panel))?;
    let v = pick_validator(cfg, &panel, pool.as_ref())?;
    let report = rec.time("validate", || validate_grid(&panel, &grid, v))?;
    if report.skipped > 0 {
        rec.note(format!("{} crash predictions could not be validated", report.skipped));
    }

    let types = cfg.types()?;
    let scenarios = cfg.scenarios();
    let drl = cfg.drl_config();
    let methods = if cfg.matching.compare_methods {
        let mut est = Vec::new();
        for &ty in &types {
            match baseline_estimates(&panel, ty, &scenarios, &grid.variables, &drl, seed) {
                Ok(e) => est.extend(e),
                Err(e) => rec.note(format!("baselines for {} failed: {e}", ty.label())),
            }
        }
        Some(rec.time("baselines", || compare_methods(&panel, &grid, &est, v))?)
    } else {
        None
    };
    let comparison = match &sel {
        Some(sel) if !sel.after_collinearity.is_empty() && !sel.kept.is_empty() => {
            let run = |vars: &[String]| selection_errors(&panel, &types, &scenarios, vars, &drl, v, seed);
            let (before, _) = rec.time("before_selection", || run(&sel.after_collinearity))?;
            let (after, _) = run(&sel.kept)?;
            Some((before, after))
        }
        _ => None,
    };

    make_out_dir(&cfg.out_dir)?;
    let p = paths.out("validation_records.csv");
    report.write_records_csv(&p)?;
    rec.output(&p);
    let p = paths.out("validation_summary.csv");
    report.write_summary_csv(&p)?;
    rec.output(&p);
    if let Validator::Matched { pool, cfg: mc } = v {
        let crashes: Vec<UnitKey> = panel.rows.iter().filter(|r| r.treatment.is_some()).map(|r| r.key).collect();
        let pool_keys: Vec<UnitKey> = pool.rows.iter().map(|r| r.key).collect();
        let m = match_counterfactuals(&crashes, &pool_keys, &mc);
        if !m.unmatched.is_empty() {
            rec.note(format!("{} crashes had no match in the pool", m.unmatched.len()));
        }
        let p = paths.out("matches.csv");
        m.write_csv(&pool_keys, &p)?;
        rec.output(&p);
    }
    if let Some(t) = &methods {
        let p = paths.out("method_comparison.csv");
        t.write_csv(&p)?;
        rec.output(&p);
    }
    if let Some((before, after)) = &comparison {
        let p = paths.out("selection_breakdown.csv");
        write_breakdown_csv(&breakdown(before, after), &p)?;
        rec.output(&p);
        let p = paths.out("selection_comparison.csv");
        write_selection_comparison_csv(before, after, &p)?;
        rec.output(&p);
    }
    let summary = ValidationSummary {
        validator: match v {
            Validator::Oracle => "oracle".into(),
            Validator::Matched { .. } => "matched".into(),
        },
        overall: report.overall,
        skipped: report.skipped,
        overlap_fraction: pool.as_ref().map(|p| overlap_fraction(&panel, p)),
    };
    let p = paths.out("validation.json");
    write_json(&summary, &p)?;
    rec.output(&p);
    finish(rec, cfg)
}

/// Estimation error at each CSVI threshold.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = preflight(cfg)?;
    let paths = Paths { cfg };
    let mut rec = Recorder::new("sweep", cfg, seed);
    let panel = load_panel(&paths, &mut rec)?;
    let scores_path = require(&paths.out(CSVI_CSV), "run `select` first")?;
    rec.input(&scores_path);
    let scores = read_csvi_csv(&scores_path)?;
    let pool = load_pool(&paths, &mut rec, needs_pool(cfg, &panel))?;
    let v = pick_validator(cfg, &panel, pool.as_ref())?;
    let types = cfg.sweep_types()?;
    let scenarios = cfg.sweep_scenarios();
    let drl = cfg.drl_config();
    let mut emptied = Vec::new();
    let table = rec.time("sweep", || {
        sweep_threshold(&cfg.sweep.epsilons, &scores, &cfg.selection.protected, |vars| {
            if vars.is_empty() {
                emptied.push(());
                return Ok(SweepErrors { mae: f64::NAN, mse: f64::NAN, rmse: f64::NAN, mape: None });
            }
            selection_errors(&panel, &types, &scenarios, vars, &drl, v, seed).map(|(_, e)| e)
        })
    })?;
    if !emptied.is_empty() {
        rec.note("some thresholds removed every variable; their errors are NaN");
    }
    let best = table.best_row();
    rec.note(format!("best epsilon {:.2} keeps {}", best.epsilon, best.kept.join(";")));

    make_out_dir(&cfg.out_dir)?;
    let p = paths.out("sweep.csv");
    table.write_csv(&p)?;
    rec.output(&p);
    finish(rec, cfg)
}

/// `synth` (raw mode continues into `ingest`) or `ingest`, then `select`,
/// `estimate`, `validate` and `sweep`.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<Vec<Manifest>, CliError> {
    preflight(cfg)?;
    let have_raw = cfg.input.traffic.is_some() && cfg.input.crashes.is_some();
    let mode = cfg.synth_mode();
    if cfg.input.panel.is_none() && mode.is_none() && !have_raw {
        return Err(cfg_err("nothing to analyse: set input.panel, input.traffic + input.crashes, or [synth]"));
    }
    let mut out = Vec::new();
    if cfg.input.panel.is_none() {
        match mode {
            Some(SynthMode::Panel) if !have_raw => out.push(cmd_synth(cfg)?),
            Some(SynthMode::Raw) if !have_raw => {
                out.push(cmd_synth(cfg)?);
                out.push(cmd_ingest(cfg)?);
            }
            _ => out.push(cmd_ingest(cfg)?),
        }
    }
    out.push(cmd_select(cfg)?);
    out.push(cmd_estimate(cfg)?);
    out.push(cmd_validate(cfg)?);
    out.push(cmd_sweep(cfg)?);
    Ok(out)
}
