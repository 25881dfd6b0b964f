//! Collinearity pruning and CSVI-based variable screening.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::learners::{fit, Dataset, LearnerSpec};
use crate::panel::fmt_num;
use crate::shapley::{explain, ShapConfig};
use crate::stats::pearson;

pub const DEFAULT_COLLINEARITY: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub r: Vec<Vec<f64>>,
    /// Zero-variance variables left out of the matrix.
    pub dropped_constant: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.r[i][j])
    }

    fn mean_abs(&self, i: usize) -> f64 {
        let p = self.names.len();
        if p < 2 {
            return 0.0;
        }
        (0..p).filter(|&j| j != i).map(|j| self.r[i][j].abs()).sum::<f64>() / (p - 1) as f64
    }
}

pub fn pearson_matrix(x: &FeatureMatrix, vars: &[String]) -> Result<CorrelationMatrix> {
    if x.n_rows() < 2 {
        return Err(Error::InvalidInput("correlation needs at least two rows".into()));
    }
    let mut names = Vec::new();
    let mut cols = Vec::new();
    let mut dropped_constant = Vec::new();
    for v in vars {
        let j = x.column_index(v).ok_or_else(|| Error::Schema(format!("unknown feature `{v}`")))?;
        let c = x.column(j);
        if c.iter().all(|&a| a == c[0]) {
            dropped_constant.push(v.clone());
        } else {
            names.push(v.clone());
            cols.push(c);
        }
    }
    let p = names.len();
    let mut r = vec![vec![1.0; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let v = pearson(&cols[i], &cols[j]).unwrap_or(0.0);
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    Ok(CorrelationMatrix { names, r, dropped_constant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub dropped: String,
    pub partner: String,
    pub r: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearResult {
    pub kept: Vec<String>,
    pub log: Vec<DropEntry>,
}

impl CollinearResult {
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dropped", "partner", "r", "reason"])?;
        for e in &self.log {
            w.write_record([e.dropped.as_str(), e.partner.as_str(), &fmt_num(e.r), e.reason.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Walk pairs with |r| >= threshold from the strongest down, dropping one
/// member of each pair whose members are both still present.
pub fn drop_collinear(m: &CorrelationMatrix, threshold: f64, priority: &[String]) -> Result<CollinearResult> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("collinearity threshold {threshold} outside (0, 1)")));
    }
    let p = m.names.len();
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if m.r[i][j].abs() >= threshold {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_by(|a, b| m.r[b.0][b.1].abs().total_cmp(&m.r[a.0][a.1].abs()));
    let rank = |i: usize| priority.iter().position(|n| *n == m.names[i]);
    let mut alive = vec![true; p];
    let mut log = Vec::new();
    for (i, j) in pairs {
        if !(alive[i] && alive[j]) {
            continue;
        }
        let (drop, keep, reason) = match (rank(i), rank(j)) {
            (Some(a), Some(b)) if a != b => {
                if a < b {
                    (j, i, "priority")
                } else {
                    (i, j, "priority")
                }
            }
            (Some(_), None) => (j, i, "priority"),
            (None, Some(_)) => (i, j, "priority"),
            _ => {
                // keep the variable less entangled with the rest
                if m.mean_abs(j) >= m.mean_abs(i) {
                    (j, i, "higher mean |r|")
                } else {
                    (i, j, "higher mean |r|")
                }
            }
        };
        alive[drop] = false;
        log.push(DropEntry {
            dropped: m.names[drop].clone(),
            partner: m.names[keep].clone(),
            r: m.r[i][j],
            reason: reason.to_string(),
        });
    }
    let kept = (0..p).filter(|&i| alive[i]).map(|i| m.names[i].clone()).collect();
    Ok(CollinearResult { kept, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsviScore {
    pub variable: String,
    pub shap_treated: f64,
    pub shap_control: f64,
    pub omega_hat: f64,
    pub csvi: f64,
}

impl CsviScore {
    pub fn new(variable: String, shap_treated: f64, shap_control: f64, omega_hat: f64) -> Self {
        let csvi = omega_hat * shap_treated + (1.0 - omega_hat) * shap_control;
        Self { variable, shap_treated, shap_control, omega_hat, csvi }
    }
}

pub fn write_csvi_csv(scores: &[CsviScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "shap_treated", "shap_control", "omega_hat", "csvi"])?;
    for s in scores {
        w.write_record([
            s.variable.as_str(),
            &fmt_num(s.shap_treated),
            &fmt_num(s.shap_control),
            &fmt_num(s.omega_hat),
            &fmt_num(s.csvi),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scores written by [`write_csvi_csv`]; `csvi` is recomputed from its parts.
pub fn read_csvi_csv(path: &Path) -> Result<Vec<CsviScore>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j).and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                Error::InvalidInput(format!("{}: line {}: bad number in column {}", path.display(), line + 2, j + 1))
            })
        };
        let name = rec.get(0).unwrap_or_default().to_string();
        out.push(CsviScore::new(name, num(1)?, num(2)?, num(3)?));
    }
    Ok(out)
}

/// Fit one outcome model per treatment group and weight each group's
/// mean-absolute Shapley values by its share of rows.
pub fn csvi_scores(
    x: &FeatureMatrix,
    y: &[f64],
    treated: &[bool],
    learner: &LearnerSpec,
    shap: &ShapConfig,
    seed: u64,
) -> Result<Vec<CsviScore>> {
    if y.len() != x.n_rows() || treated.len() != x.n_rows() {
        return Err(Error::Schema("feature, outcome and treatment lengths differ".into()));
    }
    let t_rows: Vec<usize> = (0..y.len()).filter(|&i| treated[i]).collect();
    let c_rows: Vec<usize> = (0..y.len()).filter(|&i| !treated[i]).collect();
    if t_rows.is_empty() || c_rows.is_empty() {
        return Err(Error::Empty("CSVI needs both treated and control rows".into()));
    }
    let group = |rows: &[usize], salt: u64| -> Result<Vec<f64>> {
        let gx = x.select_rows(rows);
        let gy: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let model =
            fit(learner, &Dataset::new(gx.clone(), gy)?, crate::rng::derive_seed(seed, "selection.csvi", salt))?;
        Ok(explain(&model, &gx, &gx, shap, crate::rng::derive_seed(seed, "selection.csvi", salt + 2))?.mean_abs)
    };
    let st = group(&t_rows, 1)?;
    let sc = group(&c_rows, 0)?;
    let omega = t_rows.len() as f64 / y.len() as f64;
    Ok(x.names().iter().enumerate().map(|(j, n)| CsviScore::new(n.clone(), st[j], sc[j], omega)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    pub warning: Option<String>,
}

/// Remove variables whose CSVI falls below `epsilon` unless protected.
pub fn apply_threshold(scores: &[CsviScore], epsilon: f64, protected: &[String]) -> Result<ThresholdResult> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} must be >= 0")));
    }
    let (kept, removed): (Vec<&CsviScore>, Vec<&CsviScore>) =
        scores.iter().partition(|s| s.csvi >= epsilon || protected.contains(&s.variable));
    let warning = kept.is_empty().then(|| format!("threshold {epsilon} removes every variable"));
    Ok(ThresholdResult {
        kept: kept.iter().map(|s| s.variable.clone()).collect(),
        removed: removed.iter().map(|s| s.variable.clone()).collect(),
        warning,
    })
}

pub fn default_epsilons() -> Vec<f64> {
    (0..=8).map(|k| f64::from(k) * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepErrors {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    pub errors: SweepErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub best: usize,
}

impl SweepTable {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "mae", "mse", "rmse", "mape", "n_kept", "removed", "best"])?;
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                format!("{:.2}", r.epsilon),
                fmt_num(r.errors.mae),
                fmt_num(r.errors.mse),
                fmt_num(r.errors.rmse),
                r.errors.mape.map(fmt_num).unwrap_or_default(),
                r.kept.len().to_string(),
                r.removed.join(";"),
                u8::from(i == self.best).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Run `evaluate` on the variable set kept at each epsilon. Identical sets
/// are evaluated once. The best row has the lowest MAE, ties to the smaller
/// epsilon.
pub fn sweep_threshold<F>(
    epsilons: &[f64],
    scores: &[CsviScore],
    protected: &[String],
    mut evaluate: F,
) -> Result<SweepTable>
where
    F: FnMut(&[String]) -> Result<SweepErrors>,
{
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("no thresholds to sweep".into()));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(f64::total_cmp);
    let mut cache: BTreeMap<Vec<String>, SweepErrors> = BTreeMap::new();
    let mut rows = Vec::with_capacity(eps.len());
    for e in eps {
        let t = apply_threshold(scores, e, protected)?;
        let errors = match cache.get(&t.kept) {
            Some(v) => *v,
            None => {
                let v = evaluate(&t.kept)?;
                cache.insert(t.kept.clone(), v);
                v
            }
        };
        rows.push(SweepRow { epsilon: e, kept: t.kept, removed: t.removed, errors });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.errors.mae < rows[best].errors.mae {
            best = i;
        }
    }
    Ok(SweepTable { rows, best })
}
