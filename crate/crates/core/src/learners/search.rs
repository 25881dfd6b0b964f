use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, metrics, Dataset, Hyperparams, LearnerKind, LearnerSpec, MaxFeatures, Task};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, LEARNERS_FIT};

/// Candidate values per hyperparameter; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub max_features: Vec<Option<MaxFeatures>>,
    pub learning_rate: Vec<f64>,
    pub subsample: Vec<f64>,
    pub fit_intercept: Vec<bool>,
    pub l2: Vec<f64>,
}

impl HyperSpace {
    /// Every list holds just the default value.
    pub fn single(p: &Hyperparams) -> Self {
        Self {
            n_estimators: vec![p.n_estimators],
            max_depth: vec![p.max_depth],
            min_samples_split: vec![p.min_samples_split],
            min_samples_leaf: vec![p.min_samples_leaf],
            max_features: vec![p.max_features],
            learning_rate: vec![p.learning_rate],
            subsample: vec![p.subsample],
            fit_intercept: vec![p.fit_intercept],
            l2: vec![p.l2],
        }
    }

    /// Default search ranges per learner family.
    pub fn defaults(kind: LearnerKind) -> Self {
        let mut s = Self::single(&Hyperparams::default());
        match kind {
            LearnerKind::RandomForest | LearnerKind::DecisionTree => {
                if kind == LearnerKind::RandomForest {
                    s.n_estimators = vec![10, 15, 20, 25, 30];
                }
                s.max_depth = vec![Some(3), Some(5), Some(7), Some(9), Some(11), None];
                s.min_samples_split = vec![2, 3, 4, 5];
                s.min_samples_leaf = vec![1, 2, 3, 4, 5];
                // 'auto' and None both mean every feature
                s.max_features = vec![Some(MaxFeatures::All), Some(MaxFeatures::Sqrt), Some(MaxFeatures::Log2)];
            }
            LearnerKind::GradientBoostedTrees => {
                s.n_estimators = vec![10, 40, 60, 80, 100];
                s.max_depth = (3..=10).map(Some).chain([None]).collect();
                s.learning_rate = vec![0.01, 0.02, 0.03, 0.04, 0.05];
                s.subsample = vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
                s.min_samples_leaf = (1..=10).collect();
            }
            LearnerKind::LinearRegression => s.fit_intercept = vec![true, false],
            LearnerKind::LogisticRegression => {
                s.fit_intercept = vec![true, false];
                s.l2 = vec![0.0, 0.01, 0.1, 1.0];
            }
        }
        s
    }

    fn radices(&self) -> [usize; 9] {
        [
            self.n_estimators.len(),
            self.max_depth.len(),
            self.min_samples_split.len(),
            self.min_samples_leaf.len(),
            self.max_features.len(),
            self.learning_rate.len(),
            self.subsample.len(),
            self.fit_intercept.len(),
            self.l2.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.radices().contains(&0) {
            return Err(Error::InvalidInput("every hyperparameter needs at least one candidate".into()));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.radices().iter().fold(1usize, |a, &r| a.saturating_mul(r))
    }

    /// Configuration number `k` in mixed-radix order.
    pub fn config(&self, mut k: usize) -> Hyperparams {
        let r = self.radices();
        let mut d = [0usize; 9];
        for (slot, &radix) in d.iter_mut().zip(&r).rev() {
            *slot = k % radix;
            k /= radix;
        }
        Hyperparams {
            n_estimators: self.n_estimators[d[0]],
            max_depth: self.max_depth[d[1]],
            min_samples_split: self.min_samples_split[d[2]],
            min_samples_leaf: self.min_samples_leaf[d[3]],
            max_features: self.max_features[d[4]],
            learning_rate: self.learning_rate[d[5]],
            subsample: self.subsample[d[6]],
            fit_intercept: self.fit_intercept[d[7]],
            l2: self.l2[d[8]],
            ..Hyperparams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEvaluation {
    pub draw: usize,
    pub params: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub kind: LearnerKind,
    pub task: Task,
    pub k: usize,
    pub best_draw: usize,
    pub best: Hyperparams,
    pub evaluations: Vec<CvEvaluation>,
}

/// Fold number of every row: a seeded shuffle dealt round-robin into `k` folds.
pub fn kfold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput("k-fold needs k >= 2".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("{k} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "learners.cv", 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Mean k-fold score of one configuration: accuracy for classifiers,
/// negative MSE for regressors.
pub fn cv_score(spec: &LearnerSpec, data: &Dataset, folds: &[usize], k: usize, seed: u64) -> Result<Vec<f64>> {
    (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
            let model = fit(spec, &data.subset(&train), derive_seed(seed, LEARNERS_FIT, f as u64))?;
            let held = data.subset(&test);
            let pred = model.predict(&held.x)?;
            Ok(match spec.task {
                Task::Classification => metrics::classification_metrics(&pred, &held.y)?.accuracy,
                Task::Regression => -metrics::regression_metrics(&pred, &held.y)?.mse,
            })
        })
        .collect()
}

pub fn random_grid_search(
    kind: LearnerKind,
    task: Task,
    space: &HyperSpace,
    n_draws: usize,
    data: &Dataset,
    k: usize,
    seed: u64,
) -> Result<SearchReport> {
    space.validate()?;
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be >= 1".into()));
    }
    let folds = kfold_assignments(data.len(), k, seed)?;
    let size = space.grid_size();
    let draws: Vec<usize> = if n_draws >= size {
        (0..size).collect()
    } else {
        index::sample(&mut stream_rng(seed, "learners.search", 0), size, n_draws).into_vec()
    };
    let evaluations = draws
        .iter()
        .enumerate()
        .map(|(d, &cfg)| {
            let params = space.config(cfg);
            let spec = LearnerSpec { kind, task, params: params.clone() };
            let fold_scores = cv_score(&spec, data, &folds, k, derive_seed(seed, LEARNERS_FIT, d as u64))?;
            let mean_score = fold_scores.iter().sum::<f64>() / k as f64;
            Ok(CvEvaluation { draw: d, params, fold_scores, mean_score })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, e) in evaluations.iter().enumerate() {
        if e.mean_score > evaluations[best].mean_score {
            best = i;
        }
    }
    Ok(SearchReport { kind, task, k, best_draw: best, best: evaluations[best].params.clone(), evaluations })
}

impl SearchReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let score = match self.task {
            Task::Classification => "accuracy",
            Task::Regression => "neg_mse",
        };
        let folds: Vec<String> = (0..self.k).map(|f| format!("fold_{f}")).collect();
        writeln!(out, "draw,params,mean_{score},{},best", folds.join(",")).expect("write to vec");
        for e in &self.evaluations {
            let params = serde_json::to_string(&e.params)?.replace('"', "\"\"");
            let fs: Vec<String> = e.fold_scores.iter().map(|v| crate::panel::fmt_num(*v)).collect();
            writeln!(
                out,
                "{},\"{}\",{},{},{}",
                e.draw,
                params,
                crate::panel::fmt_num(e.mean_score),
                fs.join(","),
                u8::from(e.draw == self.best_draw)
            )
            .expect("write to vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FeatureMatrix;

    fn data(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![f64::from(i as u32 % 17), f64::from(i as u32 % 5)]).collect();
        let y = rows.iter().map(|r| (r[0] * 0.4).sin() * 3.0 + r[1]).collect();
        Dataset::new(FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap(), y).unwrap()
    }

    #[test]
    fn folds_partition_rows() {
        let f = kfold_assignments(103, 10, 5).unwrap();
        let mut counts = [0; 10];
        for &k in &f {
            counts[k] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10 || c == 11));
        assert_eq!(f, kfold_assignments(103, 10, 5).unwrap());
        assert!(kfold_assignments(5, 10, 0).is_err());
    }

    #[test]
    fn mixed_radix_enumeration_is_exhaustive() {
        let s = HyperSpace::defaults(LearnerKind::RandomForest);
        assert_eq!(s.grid_size(), 5 * 6 * 4 * 5 * 3);
        let mut seen: Vec<String> = (0..s.grid_size()).map(|k| serde_json::to_string(&s.config(k)).unwrap()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), s.grid_size());
    }

    #[test]
    fn single_draw_and_single_config() {
        let d = data(60);
        let s = HyperSpace::defaults(LearnerKind::DecisionTree);
        let r = random_grid_search(LearnerKind::DecisionTree, Task::Regression, &s, 1, &d, 3, 1).unwrap();
        assert_eq!(r.evaluations.len(), 1);
        assert_eq!(r.best, r.evaluations[0].params);

        let one = HyperSpace::single(&Hyperparams { max_depth: Some(2), ..Default::default() });
        let r = random_grid_search(LearnerKind::DecisionTree, Task::Regression, &one, 5, &d, 3, 1).unwrap();
        assert_eq!(r.evaluations.len(), 1);
        assert_eq!(r.best.max_depth, Some(2));
    }

    #[test]
    fn best_has_lowest_cv_mse() {
        let d = data(80);
        let s = HyperSpace::defaults(LearnerKind::DecisionTree);
        let r = random_grid_search(LearnerKind::DecisionTree, Task::Regression, &s, 8, &d, 4, 2).unwrap();
        assert_eq!(r.evaluations.len(), 8);
        let folds = kfold_assignments(d.len(), 4, 2).unwrap();
        let mut rescored = Vec::new();
        for e in &r.evaluations {
            let spec =
                LearnerSpec { kind: LearnerKind::DecisionTree, task: Task::Regression, params: e.params.clone() };
            let fs = cv_score(&spec, &d, &folds, 4, derive_seed(2, LEARNERS_FIT, e.draw as u64)).unwrap();
            rescored.push(-fs.iter().sum::<f64>() / 4.0);
        }
        let best_mse = rescored[r.best_draw];
        assert!(rescored.iter().all(|&m| best_mse <= m));
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = data(20);
        let mut s = HyperSpace::defaults(LearnerKind::DecisionTree);
        assert!(random_grid_search(LearnerKind::DecisionTree, Task::Regression, &s, 0, &d, 3, 1).is_err());
        assert!(random_grid_search(LearnerKind::DecisionTree, Task::Regression, &s, 1, &d, 30, 1).is_err());
        s.max_depth.clear();
        assert!(random_grid_search(LearnerKind::DecisionTree, Task::Regression, &s, 1, &d, 3, 1).is_err());
    }
}
