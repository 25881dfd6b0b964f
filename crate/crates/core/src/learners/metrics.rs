use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    pub accuracy: f64,
    /// `None` when there are no positive actuals.
    pub recall: Option<f64>,
    /// `None` when there are neither positive predictions nor positive actuals.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Over rows with non-zero actual only; `None` if there are none.
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    /// `None` when the actuals are constant.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum MetricReport {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(pred: &[f64], actual: &[f64]) -> Result<ClassificationReport> {
    if pred.len() != actual.len() {
        return Err(Error::InvalidInput(format!("{} predictions for {} actuals", pred.len(), actual.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &a) in pred.iter().zip(actual) {
        let label = |v: f64| {
            if v == 1.0 {
                Ok(true)
            } else if v == 0.0 {
                Ok(false)
            } else {
                Err(Error::InvalidInput(format!("non-binary label {v}")))
            }
        };
        match (label(p)?, label(a)?) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassificationReport {
        tp,
        tn,
        fp,
        fn_,
        precision: ratio(tp, tp + fp),
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fn_ + fp),
    })
}

pub fn regression_metrics(pred: &[f64], actual: &[f64]) -> Result<RegressionReport> {
    if pred.len() != actual.len() {
        return Err(Error::InvalidInput(format!("{} predictions for {} actuals", pred.len(), actual.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut n_pct = 0usize;
    for (&p, &a) in pred.iter().zip(actual) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
        if a != 0.0 {
            pct += (e / a).abs();
            n_pct += 1;
        }
    }
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let mse = sq / n;
    Ok(RegressionReport {
        n: pred.len(),
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        mape: (n_pct > 0).then(|| pct / n_pct as f64),
        mape_excluded: pred.len() - n_pct,
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    })
}
