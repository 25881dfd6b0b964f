//! Doubly robust effect estimation: nuisance models, pseudo-outcomes, a
//! linear second stage and bootstrap inference.

mod bootstrap;
mod grid;
mod ols;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, p_stars, summarize, BootstrapDraws, Interval, MAX_REDRAWS, MIN_REPLICATES};
pub use grid::{estimate_grid, estimate_scenario, estimate_with_scores, CateGrid, CateResult, IceEntry, ScenarioFit};
pub use ols::{fit_cate_ols, CateModel, RANK_TOL};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::learners::{fit, Dataset, FittedLearner, LearnerKind, LearnerSpec, Task};
use crate::rng::{derive_seed, stream_rng};

pub const TREATMENT_FEATURE: &str = "treatment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrlConfig {
    /// Propensity scores are clipped to `[eta, 1 - eta]`.
    pub eta: f64,
    pub propensity: LearnerSpec,
    pub outcome: LearnerSpec,
    /// Two-fold cross-fitting of both nuisance models.
    pub cross_fit: bool,
    pub bootstrap_b: usize,
    /// Scenarios with fewer usable rows (or fewer than two per arm) are reported
    /// unavailable.
    pub min_rows: usize,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            propensity: LearnerSpec::new(LearnerKind::RandomForest, Task::Classification),
            outcome: LearnerSpec::new(LearnerKind::RandomForest, Task::Regression),
            cross_fit: false,
            bootstrap_b: 200,
            min_rows: 20,
        }
    }
}

impl DrlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::InvalidInput(format!("eta {} outside (0, 0.5)", self.eta)));
        }
        if self.propensity.task != Task::Classification || self.outcome.task != Task::Regression {
            return Err(Error::InvalidInput("propensity must classify and outcome must regress".into()));
        }
        if self.bootstrap_b != 0 && self.bootstrap_b < MIN_REPLICATES {
            return Err(Error::InvalidInput(format!(
                "bootstrap_b must be 0 or at least {MIN_REPLICATES}, got {}",
                self.bootstrap_b
            )));
        }
        Ok(())
    }
}

pub fn clip(e: f64, eta: f64) -> f64 {
    e.clamp(eta, 1.0 - eta)
}

/// `t/e - (1-t)/(1-e)`.
pub fn ipw_weight(t: f64, e: f64) -> Result<f64> {
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::InvalidInput(format!("propensity {e} outside (0, 1)")));
    }
    Ok(t / e - (1.0 - t) / (1.0 - e))
}

/// Inverse-propensity weighted effect over all rows.
pub fn ipw_ate(t: &[f64], y: &[f64], e: &[f64]) -> Result<f64> {
    if t.len() != y.len() || t.len() != e.len() {
        return Err(Error::InvalidInput("treatment, outcome and score lengths differ".into()));
    }
    if t.is_empty() {
        return Err(Error::Empty("no rows".into()));
    }
    let mut s = 0.0;
    for i in 0..t.len() {
        if !(e[i] > 0.0 && e[i] < 1.0) {
            return Err(Error::InvalidInput(format!("propensity {} outside (0, 1)", e[i])));
        }
        s += t[i] * y[i] / e[i] - (1.0 - t[i]) * y[i] / (1.0 - e[i]);
    }
    Ok(s / t.len() as f64)
}

/// Doubly robust pseudo-outcomes `(Y_DR(1), Y_DR(0))` of one row.
pub fn pseudo_outcome(t: f64, y: f64, e: f64, m1: f64, m0: f64) -> (f64, f64) {
    let y1 = m1 + t * (y - m1) / e;
    let y0 = m0 + (1.0 - t) * (y - m0) / (1.0 - e);
    (y1, y0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomes {
    /// Rows (positions in the inputs) with an observed outcome.
    pub rows: Vec<usize>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub skipped: usize,
}

impl PseudoOutcomes {
    pub fn diff(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }
}

pub fn dr_pseudo_outcomes(t: &[f64], y: &[Option<f64>], e: &[f64], m1: &[f64], m0: &[f64]) -> Result<PseudoOutcomes> {
    let n = t.len();
    if [y.len(), e.len(), m1.len(), m0.len()].iter().any(|&l| l != n) {
        return Err(Error::InvalidInput("pseudo-outcome inputs differ in length".into()));
    }
    let mut out = PseudoOutcomes { rows: Vec::new(), y1: Vec::new(), y0: Vec::new(), skipped: 0 };
    for i in 0..n {
        let Some(yi) = y[i] else {
            out.skipped += 1;
            continue;
        };
        if !(e[i] > 0.0 && e[i] < 1.0) {
            return Err(Error::InvalidInput(format!("propensity {} outside (0, 1)", e[i])));
        }
        let (a, b) = pseudo_outcome(t[i], yi, e[i], m1[i], m0[i]);
        out.rows.push(i);
        out.y1.push(a);
        out.y0.push(b);
    }
    Ok(out)
}

/// Mean of `Y_DR(1) - Y_DR(0)`.
pub fn dr_ate(t: &[f64], y: &[f64], e: &[f64], m1: &[f64], m0: &[f64]) -> Result<f64> {
    let y: Vec<Option<f64>> = y.iter().copied().map(Some).collect();
    let p = dr_pseudo_outcomes(t, &y, e, m1, m0)?;
    let d = p.diff();
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Two seeded halves; `None` when cross-fitting is off.
fn halves(n: usize, cross_fit: bool, seed: u64) -> Option<[Vec<usize>; 2]> {
    if !cross_fit {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut stream_rng(seed, "drl.crossfit", 0));
    let (a, b) = order.split_at(n / 2);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Some([a, b])
}

#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub eta: f64,
    /// One model, or one per cross-fitting half (model k scores half 1-k).
    pub models: Vec<FittedLearner>,
    pub scores: Vec<f64>,
}

pub fn fit_propensity(x: &FeatureMatrix, t: &[f64], cfg: &DrlConfig, seed: u64) -> Result<PropensityFit> {
    cfg.validate()?;
    let fit_on = |rows: &[usize], k: u64| -> Result<FittedLearner> {
        let d = Dataset::new(x.select_rows(rows), rows.iter().map(|&i| t[i]).collect())?;
        fit(&cfg.propensity, &d, derive_seed(seed, "drl.propensity", k))
    };
    let n = x.n_rows();
    let mut scores = vec![0.0; n];
    let models = match halves(n, cfg.cross_fit, seed) {
        None => {
            let m =
                fit(&cfg.propensity, &Dataset::new(x.clone(), t.to_vec())?, derive_seed(seed, "drl.propensity", 0))?;
            scores = m.predict_proba(x)?;
            vec![m]
        }
        Some(h) => {
            let mut models = Vec::new();
            for k in 0..2 {
                let m = fit_on(&h[k], k as u64)?;
                let other = &h[1 - k];
                for (i, p) in other.iter().zip(m.predict_proba(&x.select_rows(other))?) {
                    scores[*i] = p;
                }
                models.push(m);
            }
            models
        }
    };
    scores.iter_mut().for_each(|s| *s = clip(*s, cfg.eta));
    Ok(PropensityFit { eta: cfg.eta, models, scores })
}

#[derive(Debug, Clone)]
pub struct OutcomeFit {
    pub models: Vec<FittedLearner>,
    /// Predictions with the treatment feature set to 1 and to 0, for every row.
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
}

/// One regressor of `y` on `(treatment, x)`, fitted on rows with an outcome.
pub fn fit_outcome(x: &FeatureMatrix, t: &[f64], y: &[Option<f64>], cfg: &DrlConfig, seed: u64) -> Result<OutcomeFit> {
    let n = x.n_rows();
    let xt = x.prepend_column(TREATMENT_FEATURE, t)?;
    let x1 = x.prepend_column(TREATMENT_FEATURE, &vec![1.0; n])?;
    let x0 = x.prepend_column(TREATMENT_FEATURE, &vec![0.0; n])?;
    let fit_on = |rows: &[usize], k: u64| -> Result<FittedLearner> {
        let rows: Vec<usize> = rows.iter().copied().filter(|&i| y[i].is_some()).collect();
        if rows.is_empty() {
            return Err(Error::Estimation("no observed outcomes for the outcome model".into()));
        }
        let d = Dataset::new(xt.select_rows(&rows), rows.iter().map(|&i| y[i].expect("filtered")).collect())?;
        fit(&cfg.outcome, &d, derive_seed(seed, "drl.outcome", k))
    };
    let all: Vec<usize> = (0..n).collect();
    let mut m1 = vec![0.0; n];
    let mut m0 = vec![0.0; n];
    let models = match halves(n, cfg.cross_fit, seed) {
        None => {
            let m = fit_on(&all, 0)?;
            m1 = m.predict(&x1)?;
            m0 = m.predict(&x0)?;
            vec![m]
        }
        Some(h) => {
            let mut models = Vec::new();
            for k in 0..2 {
                let m = fit_on(&h[k], k as u64)?;
                let other = &h[1 - k];
                let p1 = m.predict(&x1.select_rows(other))?;
                let p0 = m.predict(&x0.select_rows(other))?;
                for (j, &i) in other.iter().enumerate() {
                    m1[i] = p1[j];
                    m0[i] = p0[j];
                }
                models.push(m);
            }
            models
        }
    };
    Ok(OutcomeFit { models, m1, m0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ipw_weights_by_hand() {
        assert_eq!(ipw_weight(1.0, 0.25).unwrap(), 4.0);
        assert!((ipw_weight(0.0, 0.25).unwrap() + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(ipw_weight(1.0, 0.5).unwrap(), 2.0);
        assert!(ipw_weight(1.0, 1.0).is_err());
        assert!(ipw_weight(1.0, 0.0).is_err());
    }

    #[test]
    fn ipw_ate_by_hand() {
        assert_eq!(ipw_ate(&[1.0, 0.0], &[10.0, 8.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert_eq!(ipw_ate(&[1.0, 0.0, 1.0, 0.0], &[7.0; 4], &[0.5; 4]).unwrap(), 0.0);
    }

    #[test]
    fn clipping() {
        assert_eq!(clip(0.001, 0.01), 0.01);
        assert_eq!(clip(0.999, 0.01), 0.99);
        assert_eq!(clip(0.3, 0.01), 0.3);
    }

    #[test]
    fn perfect_model_identity() {
        let (y1, _) = pseudo_outcome(1.0, 50.0, 0.5, 50.0, 0.0);
        assert_eq!(y1, 50.0);
    }

    proptest! {
        #[test]
        fn pseudo_outcome_identities(
            y in -100.0f64..100.0, e in 0.01f64..0.99, m1 in -100.0f64..100.0, m0 in -100.0f64..100.0
        ) {
            // treated row, perfect outcome model
            let (a, b) = pseudo_outcome(1.0, y, e, y, m0);
            prop_assert_eq!(a, y);
            prop_assert_eq!(b, m0);
            // untreated row, perfect outcome model
            let (a, b) = pseudo_outcome(0.0, y, e, m1, y);
            prop_assert_eq!(a, m1);
            prop_assert_eq!(b, y);
            // zero outcome model reduces to inverse weighting
            let (a, b) = pseudo_outcome(1.0, y, e, 0.0, 0.0);
            prop_assert!((a - y / e).abs() <= 1e-12 * (y / e).abs().max(1.0));
            prop_assert_eq!(b, 0.0);
            prop_assert!((ipw_weight(1.0, e).unwrap() > 0.0) && (ipw_weight(0.0, e).unwrap() < 0.0));
        }
    }

    #[test]
    fn missing_outcomes_skipped_and_counted() {
        let p = dr_pseudo_outcomes(&[1.0, 0.0, 1.0], &[Some(1.0), None, Some(2.0)], &[0.5; 3], &[0.0; 3], &[0.0; 3])
            .unwrap();
        assert_eq!(p.rows, vec![0, 2]);
        assert_eq!(p.skipped, 1);
    }
}
