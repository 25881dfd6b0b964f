//! Counterfactual matching, matched effects and error reports against the
//! fitted individual effects.

mod baselines;
mod matching;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use baselines::{baseline_estimates, compare_methods, BaselineEstimates, Method, MethodTable};
pub use matching::{match_counterfactuals, MatchConfig, MatchIndex, MatchKey, MatchSet, Matching};

use crate::drl::{estimate_grid, CateGrid, DrlConfig};
use crate::error::{Error, Result};
use crate::learners::{regression_metrics, RegressionReport};
use crate::panel::{fmt_num, CrashType, Panel, Scenario, UnitKey};
use crate::selection::SweepErrors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedEffect {
    pub csp: f64,
    pub mce: f64,
}

/// `csp = osp + ice`, `mce = mean(csp - sp_k)`.
pub fn matched_effect(osp: f64, ice: f64, speeds: &[f64]) -> Result<MatchedEffect> {
    if speeds.is_empty() {
        return Err(Error::Empty("no matched speeds".into()));
    }
    let csp = osp + ice;
    let mce = speeds.iter().map(|sp| csp - sp).sum::<f64>() / speeds.len() as f64;
    Ok(MatchedEffect { csp, mce })
}

/// What an individual effect is compared against.
#[derive(Debug, Clone, Copy)]
pub enum Validator<'a> {
    /// Matched effects from a pool of untreated units.
    Matched { pool: &'a Panel, cfg: MatchConfig },
    /// The planted effect of a synthetic panel.
    Oracle,
}

/// Source of the comparison value for each (crash row, type, scenario).
pub(crate) struct Truth<'a> {
    panel: &'a Panel,
    kind: TruthKind<'a>,
}

enum TruthKind<'a> {
    Matched { pool: &'a Panel, matches: HashMap<usize, Vec<usize>> },
    Oracle,
}

impl<'a> Truth<'a> {
    pub(crate) fn new(panel: &'a Panel, v: Validator<'a>) -> Result<Self> {
        let kind = match v {
            Validator::Oracle => {
                panel.hidden()?;
                TruthKind::Oracle
            }
            Validator::Matched { pool, cfg } => {
                let crash_rows: Vec<usize> = (0..panel.len()).filter(|&i| panel.rows[i].treatment.is_some()).collect();
                let keys: Vec<UnitKey> = crash_rows.iter().map(|&i| panel.rows[i].key).collect();
                let pool_keys: Vec<UnitKey> = pool.rows.iter().map(|r| r.key).collect();
                let m = match_counterfactuals(&keys, &pool_keys, &cfg);
                let matches = m.sets.into_iter().map(|s| (crash_rows[s.crash], s.matches)).collect();
                TruthKind::Matched { pool, matches }
            }
        };
        Ok(Self { panel, kind })
    }

    /// Record for a crash row, or `None` if it cannot be validated.
    pub(crate) fn record(&self, ty: CrashType, s: Scenario, row: usize, ice: f64) -> Option<ValidationRecord> {
        let si = self.panel.scenario_index(s)?;
        let y = self.panel.outcome(row, si)?;
        let osp = y - ice;
        let (csp, mce, n) = match &self.kind {
            TruthKind::Oracle => {
                let h = self.panel.hidden.as_ref()?;
                (osp + ice, h.tau[ty.index()][si][row], 0)
            }
            TruthKind::Matched { pool, matches } => {
                let pi = pool.scenario_index(s)?;
                let speeds: Vec<f64> = matches.get(&row)?.iter().filter_map(|&j| pool.outcome(j, pi)).collect();
                let e = matched_effect(osp, ice, &speeds).ok()?;
                (e.csp, e.mce, speeds.len())
            }
        };
        Some(ValidationRecord {
            crash_type: ty,
            scenario: s,
            row,
            key: self.panel.rows[row].key,
            osp,
            ice,
            csp,
            mce,
            n_matches: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub crash_type: CrashType,
    pub scenario: Scenario,
    pub row: usize,
    pub key: UnitKey,
    pub osp: f64,
    pub ice: f64,
    pub csp: f64,
    /// Matched effect, or the planted effect under the oracle validator.
    pub mce: f64,
    pub n_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: Vec<ValidationRecord>,
    pub overall: RegressionReport,
    pub by_cell: Vec<(CrashType, Scenario, RegressionReport)>,
    /// Crash rows that could not be compared (no outcome or no matches).
    pub skipped: usize,
}

/// Metric suite over (ice, mce) pairs, overall and per (type, scenario).
pub fn error_report(records: Vec<ValidationRecord>, skipped: usize) -> Result<ValidationReport> {
    if records.is_empty() {
        return Err(Error::Empty("no validation records".into()));
    }
    let ice: Vec<f64> = records.iter().map(|r| r.ice).collect();
    let mce: Vec<f64> = records.iter().map(|r| r.mce).collect();
    let overall = regression_metrics(&ice, &mce)?;
    let mut cells: BTreeMap<(usize, Scenario), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &records {
        let c = cells.entry((r.crash_type.index(), r.scenario)).or_default();
        c.0.push(r.ice);
        c.1.push(r.mce);
    }
    let by_cell = cells
        .into_iter()
        .map(|((t, s), (p, a))| Ok((CrashType::ALL[t], s, regression_metrics(&p, &a)?)))
        .collect::<Result<_>>()?;
    Ok(ValidationReport { records, overall, by_cell, skipped })
}

/// Compare every crash row's ICE in `grid` against the validator.
pub fn validate_grid(panel: &Panel, grid: &CateGrid, v: Validator<'_>) -> Result<ValidationReport> {
    let truth = Truth::new(panel, v)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for r in grid.results.iter().filter(|r| r.available) {
        for e in r.ice.iter().filter(|e| e.treated) {
            match truth.record(r.crash_type, r.scenario, e.row, e.ice) {
                Some(rec) => records.push(rec),
                None => skipped += 1,
            }
        }
    }
    error_report(records, skipped)
}

impl ValidationReport {
    pub fn cell(&self, ty: CrashType, s: Scenario) -> Option<&RegressionReport> {
        self.by_cell.iter().find(|(t, c, _)| *t == ty && *c == s).map(|(_, _, r)| r)
    }

    pub fn write_records_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "type",
            "dur",
            "dis",
            "unit_s",
            "unit_t",
            "unit_dir",
            "osp",
            "ice",
            "csp",
            "mce",
            "n_matches",
        ])?;
        for r in &self.records {
            w.write_record([
                r.crash_type.label().to_string(),
                r.scenario.dur.to_string(),
                r.scenario.dis.to_string(),
                r.key.milepost.to_string(),
                r.key.slot.to_string(),
                r.key.direction.to_string(),
                fmt_num(r.osp),
                fmt_num(r.ice),
                fmt_num(r.csp),
                fmt_num(r.mce),
                r.n_matches.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["type", "dur", "dis", "n", "mae", "mse", "rmse", "mape", "mape_excluded"])?;
        let mut row = |t: &str, d: String, s: String, r: &RegressionReport| {
            w.write_record([
                t.to_string(),
                d,
                s,
                r.n.to_string(),
                fmt_num(r.mae),
                fmt_num(r.mse),
                fmt_num(r.rmse),
                r.mape.map(fmt_num).unwrap_or_default(),
                r.mape_excluded.to_string(),
            ])
        };
        row("ALL", String::new(), String::new(), &self.overall)?;
        for (t, s, r) in &self.by_cell {
            row(t.label(), s.dur.to_string(), s.dis.to_string(), r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Point estimates on `vars` (no bootstrap), scored against the validator.
#[allow(clippy::too_many_arguments)]
pub fn selection_errors(
    panel: &Panel,
    types: &[CrashType],
    scenarios: &[Scenario],
    vars: &[String],
    cfg: &DrlConfig,
    v: Validator<'_>,
    seed: u64,
) -> Result<(ValidationReport, SweepErrors)> {
    if vars.is_empty() {
        return Err(Error::Empty("no variables left to estimate with".into()));
    }
    let cfg = DrlConfig { bootstrap_b: 0, ..cfg.clone() };
    let grid = estimate_grid(panel, types, scenarios, vars, &cfg, seed)?;
    let report = validate_grid(panel, &grid, v)?;
    let o = &report.overall;
    let errors = SweepErrors { mae: o.mae, mse: o.mse, rmse: o.rmse, mape: o.mape };
    Ok((report, errors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub crash_type: CrashType,
    /// `dur` (at dis = 0) or `dis` (at dur = 5).
    pub axis: String,
    pub axis_value: i32,
    pub mae_before: Option<f64>,
    pub mae_after: Option<f64>,
}

/// Error against duration at the crash location and against distance five
/// minutes after the crash, before and after variable selection.
pub fn breakdown(before: &ValidationReport, after: &ValidationReport) -> Vec<BreakdownRow> {
    let mae = |r: &ValidationReport, t, s| r.cell(t, s).map(|m| m.mae);
    let mut out = Vec::new();
    for t in CrashType::ALL {
        for d in crate::panel::DURATIONS {
            let s = Scenario::new(d, 0);
            out.push(BreakdownRow {
                crash_type: t,
                axis: "dur".into(),
                axis_value: d as i32,
                mae_before: mae(before, t, s),
                mae_after: mae(after, t, s),
            });
        }
        for k in crate::panel::DISTANCES {
            let s = Scenario::new(5, k);
            out.push(BreakdownRow {
                crash_type: t,
                axis: "dis".into(),
                axis_value: k,
                mae_before: mae(before, t, s),
                mae_after: mae(after, t, s),
            });
        }
    }
    out
}

pub fn write_breakdown_csv(rows: &[BreakdownRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["type", "axis", "axis_value", "mae_before", "mae_after"])?;
    for r in rows {
        w.write_record([
            r.crash_type.label().to_string(),
            r.axis.clone(),
            r.axis_value.to_string(),
            r.mae_before.map(fmt_num).unwrap_or_default(),
            r.mae_after.map(fmt_num).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Before/after overall metrics.
pub fn write_selection_comparison_csv(before: &ValidationReport, after: &ValidationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "mae", "mse", "rmse", "mape"])?;
    for (name, r) in [("before_selection", before), ("after_selection", after)] {
        let o = &r.overall;
        w.write_record([
            name.to_string(),
            fmt_num(o.mae),
            fmt_num(o.mse),
            fmt_num(o.rmse),
            o.mape.map(fmt_num).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Share of pool units that also appear in the training panel.
pub fn overlap_fraction(panel: &Panel, pool: &Panel) -> f64 {
    if pool.is_empty() {
        return 0.0;
    }
    let train: HashSet<UnitKey> = panel.rows.iter().map(|r| r.key).collect();
    pool.rows.iter().filter(|r| train.contains(&r.key)).count() as f64 / pool.len() as f64
}
