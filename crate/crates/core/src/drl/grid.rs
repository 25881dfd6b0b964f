use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap, p_stars, summarize, Interval};
use super::ols::{fit_cate_ols, CateModel};
use super::{dr_pseudo_outcomes, fit_outcome, fit_propensity, DrlConfig, PseudoOutcomes};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::panel::{fmt_num, CrashType, Panel, Scenario, UnitKey, DISTANCES, DURATIONS};
use crate::rng::derive_seed;

/// Point estimate for one outcome scenario.
#[derive(Debug, Clone)]
pub struct ScenarioFit {
    pub pseudo: PseudoOutcomes,
    pub cate: CateModel,
    /// Mean pseudo-outcome difference, equal to the mean fitted CATE.
    pub ate: f64,
    /// CATE prediction for every input row.
    pub ice: Vec<f64>,
}

fn check_usable(t: &[f64], y: &[Option<f64>], min_rows: usize) -> Result<()> {
    let mut n = [0usize; 2];
    for (ti, yi) in t.iter().zip(y) {
        if yi.is_some() {
            n[usize::from(*ti == 1.0)] += 1;
        }
    }
    if n[0] + n[1] < min_rows || n[0] < 2 || n[1] < 2 {
        return Err(Error::Estimation(format!("too few observed outcomes ({} treated, {} untreated)", n[1], n[0])));
    }
    Ok(())
}

/// Outcome model, pseudo-outcomes and second stage given propensity scores.
pub fn estimate_with_scores(
    x: &FeatureMatrix,
    t: &[f64],
    y: &[Option<f64>],
    e: &[f64],
    cfg: &DrlConfig,
    seed: u64,
) -> Result<ScenarioFit> {
    check_usable(t, y, cfg.min_rows)?;
    let out = fit_outcome(x, t, y, cfg, seed)?;
    let pseudo = dr_pseudo_outcomes(t, y, e, &out.m1, &out.m0)?;
    let diff = pseudo.diff();
    let cate = fit_cate_ols(&x.select_rows(&pseudo.rows), &diff)?;
    let ate = diff.iter().sum::<f64>() / diff.len() as f64;
    let ice = cate.predict(x)?;
    Ok(ScenarioFit { pseudo, cate, ate, ice })
}

/// Full two-stage fit for one scenario.
pub fn estimate_scenario(
    x: &FeatureMatrix,
    t: &[f64],
    y: &[Option<f64>],
    cfg: &DrlConfig,
    seed: u64,
) -> Result<ScenarioFit> {
    check_usable(t, y, cfg.min_rows)?;
    let prop = fit_propensity(x, t, cfg, derive_seed(seed, "drl.stage", 0))?;
    estimate_with_scores(x, t, y, &prop.scores, cfg, derive_seed(seed, "drl.stage", 1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CateResult {
    pub crash_type: CrashType,
    pub scenario: Scenario,
    pub available: bool,
    pub note: Option<String>,
    pub n_rows: usize,
    pub n_treated: usize,
    pub n_missing: usize,
    pub ate: Option<f64>,
    pub interval: Option<Interval>,
    pub cate: Option<CateModel>,
    #[serde(skip)]
    pub ice: Vec<IceEntry>,
}

/// Fitted CATE of one analysis row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IceEntry {
    /// Row index in the panel.
    pub row: usize,
    pub key: UnitKey,
    pub treated: bool,
    pub ice: f64,
}

impl CateResult {
    pub fn ci_halfwidth(&self) -> Option<f64> {
        self.interval.map(|iv| 0.5 * (iv.high - iv.low))
    }

    pub fn stars(&self) -> &'static str {
        self.interval.map(|iv| p_stars(iv.p_value)).unwrap_or("")
    }

    fn unavailable(ty: CrashType, s: Scenario, note: String) -> Self {
        CateResult {
            crash_type: ty,
            scenario: s,
            available: false,
            note: Some(note),
            n_rows: 0,
            n_treated: 0,
            n_missing: 0,
            ate: None,
            interval: None,
            cate: None,
            ice: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CateGrid {
    pub variables: Vec<String>,
    pub bootstrap_b: usize,
    pub results: Vec<CateResult>,
}

/// Effects for every (type, scenario). The propensity model is fitted once
/// per type and per bootstrap replicate; outcome models once per scenario.
pub fn estimate_grid(
    panel: &Panel,
    types: &[CrashType],
    scenarios: &[Scenario],
    vars: &[String],
    cfg: &DrlConfig,
    seed: u64,
) -> Result<CateGrid> {
    cfg.validate()?;
    let s_idx = scenarios
        .iter()
        .map(|s| panel.scenario_index(*s).ok_or_else(|| Error::Schema(format!("panel has no outcome {}", s.column()))))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::new();
    for &ty in types {
        let ty_seed = derive_seed(seed, "drl.type", ty.index() as u64);
        let rows = panel.analysis_rows(ty);
        let t = panel.treatment_for(ty, &rows);
        let n_treated = t.iter().filter(|&&v| v == 1.0).count();
        if n_treated == 0 || n_treated == rows.len() {
            for s in scenarios {
                results.push(CateResult::unavailable(ty, *s, "no variation in treatment".into()));
            }
            continue;
        }
        let x = panel.matrix(&rows, vars)?;
        let ys: Vec<Vec<Option<f64>>> =
            s_idx.iter().map(|&k| rows.iter().map(|&r| panel.outcome(r, k)).collect()).collect();
        let prop = fit_propensity(&x, &t, cfg, derive_seed(ty_seed, "drl.stage", 0))?;
        let fits: Vec<Result<ScenarioFit>> = (0..scenarios.len())
            .into_par_iter()
            .map(|k| {
                estimate_with_scores(&x, &t, &ys[k], &prop.scores, cfg, derive_seed(ty_seed, "drl.scenario", k as u64))
            })
            .collect();
        let usable: Vec<bool> = fits.iter().map(Result::is_ok).collect();
        // bootstrap_b = 0 skips inference (point estimates only)
        let draws = if cfg.bootstrap_b == 0 {
            None
        } else {
            Some(bootstrap(&t, cfg.bootstrap_b, ty_seed, |idx, rs| {
                let xb = x.select_rows(idx);
                let tb: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
                let pb = fit_propensity(&xb, &tb, cfg, derive_seed(rs, "drl.stage", 0))?;
                Ok((0..scenarios.len())
                    .map(|k| {
                        if !usable[k] {
                            return f64::NAN;
                        }
                        let yb: Vec<Option<f64>> = idx.iter().map(|&i| ys[k][i]).collect();
                        estimate_with_scores(&xb, &tb, &yb, &pb.scores, cfg, derive_seed(rs, "drl.scenario", k as u64))
                            .map(|f| f.ate)
                            .unwrap_or(f64::NAN)
                    })
                    .collect())
            })?)
        };
        for (k, fit) in fits.into_iter().enumerate() {
            let s = scenarios[k];
            let fit = match fit {
                Ok(f) => f,
                Err(e) => {
                    results.push(CateResult::unavailable(ty, s, e.to_string()));
                    continue;
                }
            };
            let interval = draws.as_ref().and_then(|d| summarize(&d.column(k), fit.ate));
            let n_missing = fit.pseudo.skipped;
            let ice = rows
                .iter()
                .zip(&fit.ice)
                .zip(&t)
                .map(|((&r, &v), &ti)| IceEntry { row: r, key: panel.rows[r].key, treated: ti == 1.0, ice: v })
                .collect();
            results.push(CateResult {
                crash_type: ty,
                scenario: s,
                available: true,
                note: interval
                    .filter(|iv| iv.n < cfg.bootstrap_b)
                    .map(|iv| format!("{} of {} replicates failed", cfg.bootstrap_b - iv.n, cfg.bootstrap_b)),
                n_rows: fit.pseudo.rows.len(),
                n_treated: fit.pseudo.rows.iter().filter(|&&i| t[i] == 1.0).count(),
                n_missing,
                ate: Some(fit.ate),
                interval,
                cate: Some(fit.cate),
                ice,
            });
        }
    }
    Ok(CateGrid { variables: vars.to_vec(), bootstrap_b: cfg.bootstrap_b, results })
}

fn cell(r: &CateResult) -> String {
    match (r.ate, r.ci_halfwidth()) {
        (Some(a), Some(h)) => format!("{a:.2}{} ± {h:.2}", r.stars()),
        (Some(a), None) => format!("{a:.2}"),
        _ => "NA".to_string(),
    }
}

impl CateGrid {
    pub fn get(&self, ty: CrashType, s: Scenario) -> Option<&CateResult> {
        self.results.iter().find(|r| r.crash_type == ty && r.scenario == s)
    }

    /// One row per (type, dur, dis).
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "type",
            "dur",
            "dis",
            "estimate",
            "ci_halfwidth",
            "p_stars",
            "ci_low",
            "ci_high",
            "p_value",
            "n_rows",
            "n_treated",
            "n_missing",
            "available",
        ])?;
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        for r in &self.results {
            w.write_record([
                r.crash_type.label().to_string(),
                r.scenario.dur.to_string(),
                r.scenario.dis.to_string(),
                opt(r.ate),
                opt(r.ci_halfwidth()),
                r.stars().to_string(),
                opt(r.interval.map(|i| i.low)),
                opt(r.interval.map(|i| i.high)),
                opt(r.interval.map(|i| i.p_value)),
                r.n_rows.to_string(),
                r.n_treated.to_string(),
                r.n_missing.to_string(),
                u8::from(r.available).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Type-by-duration rows, one column per distance, cells as
    /// `estimate[stars] ± halfwidth`.
    pub fn wide_rows(&self) -> Vec<Vec<String>> {
        let mut by: BTreeMap<(usize, u32), BTreeMap<i32, String>> = BTreeMap::new();
        for r in &self.results {
            by.entry((r.crash_type.index(), r.scenario.dur)).or_default().insert(r.scenario.dis, cell(r));
        }
        let mut dis: Vec<i32> = self.results.iter().map(|r| r.scenario.dis).collect();
        dis.sort_unstable_by(|a, b| b.cmp(a));
        dis.dedup();
        by.into_iter()
            .map(|((ti, dur), cells)| {
                let mut row = vec![CrashType::ALL[ti].label().to_string(), dur.to_string()];
                row.extend(dis.iter().map(|d| cells.get(d).cloned().unwrap_or_else(|| "NA".into())));
                row
            })
            .collect()
    }

    pub fn write_wide_csv(&self, path: &Path) -> Result<()> {
        let mut dis: Vec<i32> = self.results.iter().map(|r| r.scenario.dis).collect();
        dis.sort_unstable_by(|a, b| b.cmp(a));
        dis.dedup();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["type".to_string(), "dur".to_string()];
        header.extend(dis.iter().map(|d| format!("dis_{d}")));
        w.write_record(&header)?;
        for row in self.wide_rows() {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_ice_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["type", "dur", "dis", "row", "unit_s", "unit_t", "unit_dir", "treated", "ice"])?;
        for r in &self.results {
            for e in &r.ice {
                w.write_record([
                    r.crash_type.label().to_string(),
                    r.scenario.dur.to_string(),
                    r.scenario.dis.to_string(),
                    e.row.to_string(),
                    e.key.milepost.to_string(),
                    e.key.slot.to_string(),
                    e.key.direction.to_string(),
                    u8::from(e.treated).to_string(),
                    fmt_num(e.ice),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fill each result's ICE entries from a file written by
    /// [`CateGrid::write_ice_csv`], checking units against `panel`.
    pub fn attach_ice_csv(&mut self, path: &Path, panel: &Panel) -> Result<()> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut by: BTreeMap<(CrashType, Scenario), Vec<IceEntry>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::InvalidInput(format!("{}: line {}: {what}", path.display(), line + 2));
            if rec.len() != 9 {
                return Err(bad("expected 9 fields"));
            }
            let ty: CrashType = rec[0].parse()?;
            let s =
                Scenario::new(rec[1].parse().map_err(|_| bad("bad dur"))?, rec[2].parse().map_err(|_| bad("bad dis"))?);
            let row: usize = rec[3].parse().map_err(|_| bad("bad row"))?;
            let key = UnitKey {
                milepost: rec[4].parse().map_err(|_| bad("bad unit_s"))?,
                slot: rec[5].parse().map_err(|_| bad("bad unit_t"))?,
                direction: rec[6].parse()?,
            };
            if panel.rows.get(row).map(|r| r.key) != Some(key) {
                return Err(bad("unit does not match the panel"));
            }
            let ice = rec[8].parse().map_err(|_| bad("bad ice"))?;
            by.entry((ty, s)).or_default().push(IceEntry { row, key, treated: &rec[7] == "1", ice });
        }
        for r in &mut self.results {
            r.ice = by.remove(&(r.crash_type, r.scenario)).unwrap_or_default();
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    /// Results without ICE entries; see [`CateGrid::attach_ice_csv`].
    pub fn read_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    /// True when every type × duration × distance of the standard layout is present.
    pub fn has_standard_layout(&self) -> bool {
        CrashType::ALL.iter().all(|&ty| {
            DURATIONS.iter().all(|&d| DISTANCES.iter().all(|&s| self.get(ty, Scenario::new(d, s)).is_some()))
        })
    }
}
