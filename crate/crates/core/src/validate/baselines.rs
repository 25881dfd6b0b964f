use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Truth, Validator};
use crate::drl::{estimate_with_scores, fit_propensity, ipw_ate, CateGrid, DrlConfig};
use crate::error::{Error, Result};
use crate::learners::{fit, regression_metrics, Dataset, RegressionReport};
use crate::panel::{fmt_num, CrashType, Panel, Scenario};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Naive,
    Ipw,
    Dml,
    Dr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Ipw, Method::Dml, Method::Dr];

    pub fn label(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Ipw => "ipw",
            Method::Dml => "dml",
            Method::Dr => "drl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Average effects of one (type, scenario) under every method; `None` when
/// the scenario has too few observed outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimates {
    pub crash_type: CrashType,
    pub scenario: Scenario,
    pub n_rows: usize,
    pub naive: Option<f64>,
    pub ipw: Option<f64>,
    pub dml: Option<f64>,
    pub dr: Option<f64>,
}

impl BaselineEstimates {
    pub fn get(&self, m: Method) -> Option<f64> {
        match m {
            Method::Naive => self.naive,
            Method::Ipw => self.ipw,
            Method::Dml => self.dml,
            Method::Dr => self.dr,
        }
    }
}

fn diff_in_means(t: &[f64], y: &[f64]) -> Result<f64> {
    let (mut s, mut n) = ([0.0; 2], [0usize; 2]);
    for (ti, yi) in t.iter().zip(y) {
        let k = usize::from(*ti == 1.0);
        s[k] += yi;
        n[k] += 1;
    }
    if n[0] == 0 || n[1] == 0 {
        return Err(Error::SingleClass("difference in means needs both arms".into()));
    }
    Ok(s[1] / n[1] as f64 - s[0] / n[0] as f64)
}

/// Residual-on-residual slope with an outcome model that sees covariates only.
fn dml(x: &crate::frame::FeatureMatrix, t: &[f64], y: &[f64], e: &[f64], cfg: &DrlConfig, seed: u64) -> Result<f64> {
    let g = fit(&cfg.outcome, &Dataset::new(x.clone(), y.to_vec())?, seed)?;
    let gx = g.predict(x)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..t.len() {
        let tr = t[i] - e[i];
        num += (y[i] - gx[i]) * tr;
        den += tr * tr;
    }
    if den <= 0.0 {
        return Err(Error::Estimation("treatment residuals vanish".into()));
    }
    Ok(num / den)
}

/// Naive, IPW, DML and DR average effects for each scenario of one type.
/// The propensity model is fitted once and shared.
pub fn baseline_estimates(
    panel: &Panel,
    ty: CrashType,
    scenarios: &[Scenario],
    vars: &[String],
    cfg: &DrlConfig,
    seed: u64,
) -> Result<Vec<BaselineEstimates>> {
    cfg.validate()?;
    let rows = panel.analysis_rows(ty);
    let t = panel.treatment_for(ty, &rows);
    let x = panel.matrix(&rows, vars)?;
    let prop = fit_propensity(&x, &t, cfg, derive_seed(seed, "validate.baseline", 0))?;
    scenarios
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            let si =
                panel.scenario_index(s).ok_or_else(|| Error::Schema(format!("panel has no outcome {}", s.column())))?;
            let y: Vec<Option<f64>> = rows.iter().map(|&r| panel.outcome(r, si)).collect();
            let ks = derive_seed(seed, "validate.baseline", 1 + k as u64);
            let mut out = BaselineEstimates {
                crash_type: ty,
                scenario: s,
                n_rows: 0,
                naive: None,
                ipw: None,
                dml: None,
                dr: None,
            };
            let Ok(fit) = estimate_with_scores(&x, &t, &y, &prop.scores, cfg, ks) else {
                return Ok(out);
            };
            let obs = &fit.pseudo.rows;
            let to: Vec<f64> = obs.iter().map(|&i| t[i]).collect();
            let yo: Vec<f64> = obs.iter().map(|&i| y[i].expect("observed")).collect();
            let eo: Vec<f64> = obs.iter().map(|&i| prop.scores[i]).collect();
            out.n_rows = obs.len();
            out.naive = Some(diff_in_means(&to, &yo)?);
            out.ipw = Some(ipw_ate(&to, &yo, &eo)?);
            out.dml = Some(dml(&x.select_rows(obs), &to, &yo, &eo, cfg, derive_seed(ks, "validate.dml", 0))?);
            out.dr = Some(fit.ate);
            Ok(out)
        })
        .collect()
}

/// Error of every method against the validator, methods x metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTable {
    pub rows: Vec<(Method, RegressionReport)>,
}

impl MethodTable {
    pub fn get(&self, m: Method) -> Option<&RegressionReport> {
        self.rows.iter().find(|(k, _)| *k == m).map(|(_, r)| r)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "n", "mae", "mse", "rmse", "mape"])?;
        for (m, r) in &self.rows {
            w.write_record([
                m.label().to_string(),
                r.n.to_string(),
                fmt_num(r.mae),
                fmt_num(r.mse),
                fmt_num(r.rmse),
                r.mape.map(fmt_num).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Baselines predict their average effect for every crash; the doubly robust
/// learner predicts each crash's fitted CATE from `grid`.
pub fn compare_methods(
    panel: &Panel,
    grid: &CateGrid,
    estimates: &[BaselineEstimates],
    v: Validator<'_>,
) -> Result<MethodTable> {
    let truth = Truth::new(panel, v)?;
    let mut pred: [Vec<f64>; 4] = Default::default();
    let mut actual = Vec::new();
    for r in grid.results.iter().filter(|r| r.available) {
        let Some(b) = estimates.iter().find(|b| b.crash_type == r.crash_type && b.scenario == r.scenario) else {
            continue;
        };
        let (Some(naive), Some(ipw), Some(dml)) = (b.naive, b.ipw, b.dml) else {
            continue;
        };
        for e in r.ice.iter().filter(|e| e.treated) {
            let Some(rec) = truth.record(r.crash_type, r.scenario, e.row, e.ice) else {
                continue;
            };
            pred[0].push(naive);
            pred[1].push(ipw);
            pred[2].push(dml);
            pred[3].push(e.ice);
            actual.push(rec.mce);
        }
    }
    if actual.is_empty() {
        return Err(Error::Empty("no crash could be validated".into()));
    }
    let rows =
        Method::ALL.iter().zip(&pred).map(|(&m, p)| Ok((m, regression_metrics(p, &actual)?))).collect::<Result<_>>()?;
    Ok(MethodTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_in_means_by_hand() {
        let d = diff_in_means(&[1.0, 1.0, 0.0, 0.0, 0.0], &[10.0, 20.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d, 13.0);
        assert!(diff_in_means(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn method_labels_unique() {
        let mut l: Vec<_> = Method::ALL.iter().map(|m| m.label()).collect();
        l.dedup();
        assert_eq!(l.len(), 4);
    }
}
