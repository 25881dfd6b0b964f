//! Supervised learners, random grid search and the evaluation metrics.

mod forest;
mod gbt;
mod linear;
mod logistic;
pub mod metrics;
pub mod search;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::Forest;
pub use gbt::Gbt;
pub use linear::{weighted_lstsq, Linear};
pub use logistic::Logistic;
pub use metrics::{classification_metrics, regression_metrics, ClassificationReport, MetricReport, RegressionReport};
pub use search::{kfold_assignments, random_grid_search, CvEvaluation, HyperSpace, SearchReport};
pub use tree::{Criterion, Tree};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use tree::{TrainView, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    GradientBoostedTrees,
    LinearRegression,
    LogisticRegression,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::DecisionTree,
        LearnerKind::RandomForest,
        LearnerKind::GradientBoostedTrees,
        LearnerKind::LinearRegression,
        LearnerKind::LogisticRegression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::GradientBoostedTrees => "gradient_boosted_trees",
            LearnerKind::LinearRegression => "linear_regression",
            LearnerKind::LogisticRegression => "logistic_regression",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        !matches!(
            (self, task),
            (LearnerKind::LinearRegression, Task::Classification) | (LearnerKind::LogisticRegression, Task::Regression)
        )
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "decision_tree" | "tree" => LearnerKind::DecisionTree,
            "random_forest" | "rf" => LearnerKind::RandomForest,
            "gradient_boosted_trees" | "gbt" => LearnerKind::GradientBoostedTrees,
            "linear_regression" | "linear" => LearnerKind::LinearRegression,
            "logistic_regression" | "logistic" => LearnerKind::LogisticRegression,
            other => return Err(Error::InvalidInput(format!("unknown learner `{other}`"))),
        };
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (p as f64).log2().floor() as usize,
            MaxFeatures::Fraction(f) => (f * p as f64).floor() as usize,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// `None` picks all features for regression and √p for classification
    /// forests.
    pub max_features: Option<MaxFeatures>,
    pub learning_rate: f64,
    pub subsample: f64,
    pub bootstrap: bool,
    pub fit_intercept: bool,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            learning_rate: 0.1,
            subsample: 1.0,
            bootstrap: true,
            fit_intercept: true,
            l2: 0.0,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("hyperparameter {m}")));
        if self.n_estimators == 0 {
            return bad("n_estimators must be >= 1");
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return bad("min_samples_leaf >= 1 and min_samples_split >= 2 required");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return bad("l2 must be >= 0");
        }
        Ok(())
    }
}

/// Learner family, task and settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub task: Task,
    #[serde(default)]
    pub params: Hyperparams,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, task: Task) -> Self {
        Self { kind, task, params: Hyperparams::default() }
    }

    pub fn with_params(mut self, params: Hyperparams) -> Self {
        self.params = params;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: FeatureMatrix, y: Vec<f64>) -> Result<Self> {
        Self::weighted(x, y, None)
    }

    pub fn weighted(x: FeatureMatrix, y: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Schema(format!("{} feature rows but {} targets", x.n_rows(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite target".into()));
        }
        if let Some(w) = &weights {
            if w.len() != y.len() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput("weights must be finite, non-negative, one per row".into()));
            }
        }
        Ok(Self { x, y, weights })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            weights: self.weights.as_ref().map(|w| rows.iter().map(|&i| w[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Tree(Tree),
    Forest(Forest),
    Gbt(Gbt),
    Linear(Linear),
    Logistic(Logistic),
}

/// A fitted model together with its training schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    pub format_version: u32,
    pub kind: LearnerKind,
    pub task: Task,
    pub params: Hyperparams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub model: Model,
}

/// Anything that maps an aligned feature row to a real output.
pub trait Predictor: Sync {
    fn feature_names(&self) -> &[String];
    fn predict_one(&self, row: &[f64]) -> f64;
}

pub fn fit(spec: &LearnerSpec, data: &Dataset, seed: u64) -> Result<FittedLearner> {
    let LearnerSpec { kind, task, params } = spec;
    let (kind, task) = (*kind, *task);
    params.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data has no rows".into()));
    }
    if !kind.supports(task) {
        return Err(Error::InvalidInput(format!("{kind} cannot be used for {task:?}")));
    }
    if task == Task::Classification {
        if data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("classification targets must be 0 or 1".into()));
        }
        let pos = data.y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == data.len() {
            return Err(Error::SingleClass(format!("all {} rows share one label", data.len())));
        }
    }
    let ones;
    let w: &[f64] = match &data.weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; data.len()];
            &ones
        }
    };
    let n_cols = data.x.n_cols();
    let view = TrainView { x: data.x.as_slice(), n_cols, y: &data.y, w };
    let default_mf = match (kind, task) {
        (LearnerKind::RandomForest, Task::Classification) => MaxFeatures::Sqrt,
        _ => MaxFeatures::All,
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split as f64,
        min_samples_leaf: params.min_samples_leaf as f64,
        mtry: params.max_features.unwrap_or(default_mf).resolve(n_cols),
        criterion: match task {
            Task::Regression => Criterion::Variance,
            Task::Classification => Criterion::Gini,
        },
    };
    let model = match kind {
        LearnerKind::DecisionTree => {
            let mut rng = crate::rng::stream_rng(seed, crate::rng::LEARNERS_FIT, 0);
            Model::Tree(Tree::fit(view, &tree_params, &mut rng))
        }
        LearnerKind::RandomForest => {
            Model::Forest(Forest::fit(view, &tree_params, params.n_estimators, params.bootstrap, seed))
        }
        LearnerKind::GradientBoostedTrees => Model::Gbt(Gbt::fit(
            view,
            &tree_params,
            params.n_estimators,
            params.learning_rate,
            params.subsample,
            task == Task::Classification,
            seed,
        )),
        LearnerKind::LinearRegression => Model::Linear(Linear::fit(view.x, n_cols, view.y, w, params.fit_intercept)?),
        LearnerKind::LogisticRegression => {
            Model::Logistic(Logistic::fit(view.x, n_cols, view.y, w, params.fit_intercept, params.l2)?)
        }
    };
    Ok(FittedLearner {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        task,
        params: params.clone(),
        seed,
        feature_names: data.x.names().to_vec(),
        model,
    })
}

impl FittedLearner {
    /// Regression value, or probability of class 1 for classifiers.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        match &self.model {
            Model::Tree(t) => t.predict_row(row),
            Model::Forest(f) => f.predict_row(row),
            Model::Gbt(g) => g.predict_row(row),
            Model::Linear(l) => l.predict_row(row),
            Model::Logistic(l) => l.predict_row(row),
        }
    }

    fn scores(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let map = x.alignment_to(&self.feature_names)?;
        let identity = map.iter().enumerate().all(|(a, &b)| a == b);
        let mut buf = vec![0.0; map.len()];
        Ok((0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                if identity {
                    self.score_row(row)
                } else {
                    for (dst, &src) in buf.iter_mut().zip(&map) {
                        *dst = row[src];
                    }
                    self.score_row(&buf)
                }
            })
            .collect())
    }

    /// Regression values, or 0/1 labels (threshold 0.5) for classifiers.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let s = self.scores(x)?;
        Ok(match self.task {
            Task::Regression => s,
            Task::Classification => s.into_iter().map(|p| f64::from(u8::from(p >= 0.5))).collect(),
        })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if self.task != Task::Classification {
            return Err(Error::InvalidInput(format!("{} regressor has no probabilities", self.kind)));
        }
        Ok(self.scores(x)?.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    /// Member trees of a forest.
    pub fn trees(&self) -> &[Tree] {
        match &self.model {
            Model::Forest(f) => &f.trees,
            Model::Gbt(g) => &g.trees,
            Model::Tree(t) => std::slice::from_ref(t),
            _ => &[],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedLearner = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported model format version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

impl Predictor for FittedLearner {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn predict_one(&self, row: &[f64]) -> f64 {
        self.score_row(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("x{j}")).collect()
    }

    fn regression_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|r| 2.0 * r[0] - r[1] + 0.1 * rng.random::<f64>()).collect();
        Dataset::new(FeatureMatrix::from_rows(names(3), &rows).unwrap(), y).unwrap()
    }

    fn classification_data(n: usize, seed: u64) -> Dataset {
        let mut d = regression_data(n, seed);
        d.y = d.x.rows().map(|r| f64::from(u8::from(r[0] + 0.3 * r[2] > 0.6))).collect();
        d
    }

    #[test]
    fn constant_target_tree_predicts_constant() {
        let mut d = regression_data(30, 1);
        d.y = vec![7.0; 30];
        let m = fit(&LearnerSpec::new(LearnerKind::DecisionTree, Task::Regression), &d, 0).unwrap();
        assert!(m.predict(&d.x).unwrap().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn logistic_separates_separable_data() {
        let x = FeatureMatrix::from_rows(names(1), &(0..20).map(|i| vec![f64::from(i)]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| f64::from(u8::from(i >= 10))).collect();
        let d = Dataset::new(x, y.clone()).unwrap();
        let m = fit(&LearnerSpec::new(LearnerKind::LogisticRegression, Task::Classification), &d, 0).unwrap();
        let pred = m.predict(&d.x).unwrap();
        assert_eq!(pred, y);
        assert!(m.predict_proba(&d.x).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn single_class_rejected() {
        let mut d = classification_data(20, 2);
        d.y = vec![1.0; 20];
        let err = fit(&LearnerSpec::new(LearnerKind::RandomForest, Task::Classification), &d, 0);
        assert!(matches!(err, Err(Error::SingleClass(_))));
    }

    #[test]
    fn refit_is_bit_identical() {
        let d = regression_data(200, 3);
        for kind in [LearnerKind::RandomForest, LearnerKind::GradientBoostedTrees] {
            let spec = LearnerSpec::new(kind, Task::Regression).with_params(Hyperparams {
                n_estimators: 20,
                subsample: 0.7,
                ..Default::default()
            });
            let a = fit(&spec, &d, 9).unwrap().predict(&d.x).unwrap();
            let b = fit(&spec, &d, 9).unwrap().predict(&d.x).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn forest_is_mean_of_members() {
        let d = regression_data(150, 4);
        let spec = LearnerSpec::new(LearnerKind::RandomForest, Task::Regression)
            .with_params(Hyperparams { n_estimators: 7, ..Default::default() });
        let m = fit(&spec, &d, 5).unwrap();
        let p = m.predict(&d.x).unwrap();
        for (i, row) in d.x.rows().enumerate() {
            let mean = m.trees().iter().map(|t| t.predict_row(row)).sum::<f64>() / 7.0;
            assert!((p[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn single_tree_forest_matches_its_tree() {
        let d = regression_data(80, 6);
        let spec = LearnerSpec::new(LearnerKind::RandomForest, Task::Regression)
            .with_params(Hyperparams { n_estimators: 1, ..Default::default() });
        let m = fit(&spec, &d, 1).unwrap();
        let t = &m.trees()[0];
        for (i, row) in d.x.rows().enumerate() {
            assert_eq!(m.predict(&d.x).unwrap()[i], t.predict_row(row));
        }
    }

    #[test]
    fn gbt_zero_learning_rate_predicts_mean() {
        let d = regression_data(50, 7);
        let spec = LearnerSpec::new(LearnerKind::GradientBoostedTrees, Task::Regression)
            .with_params(Hyperparams { learning_rate: 0.0, ..Default::default() });
        let m = fit(&spec, &d, 0).unwrap();
        let mean = d.y.iter().sum::<f64>() / 50.0;
        assert!(m.predict(&d.x).unwrap().iter().all(|p| (p - mean).abs() < 1e-12));
    }

    #[test]
    fn classifiers_fit_training_data() {
        let d = classification_data(300, 8);
        for kind in [LearnerKind::DecisionTree, LearnerKind::RandomForest, LearnerKind::GradientBoostedTrees] {
            let spec = LearnerSpec::new(kind, Task::Classification);
            let m = fit(&spec, &d, 2).unwrap();
            let acc = m.predict(&d.x).unwrap().iter().zip(&d.y).filter(|(a, b)| a == b).count();
            assert!(acc as f64 / 300.0 > 0.95, "{kind}: {acc}");
        }
    }

    #[test]
    fn columns_matched_by_name() {
        let d = regression_data(60, 9);
        let m = fit(&LearnerSpec::new(LearnerKind::LinearRegression, Task::Regression), &d, 0).unwrap();
        let shuffled = d.x.select_columns(&["x2".into(), "x0".into(), "x1".into()]).unwrap();
        assert_eq!(m.predict(&d.x).unwrap(), m.predict(&shuffled).unwrap());
        let extra = d.x.prepend_column("zz", &vec![0.0; 60]).unwrap();
        assert!(matches!(m.predict(&extra), Err(Error::Schema(_))));
        let missing = d.x.select_columns(&["x0".into()]).unwrap();
        assert!(m.predict(&missing).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = classification_data(100, 10);
        let spec = LearnerSpec::new(LearnerKind::GradientBoostedTrees, Task::Classification)
            .with_params(Hyperparams { n_estimators: 5, ..Default::default() });
        let m = fit(&spec, &d, 3).unwrap();
        let back = FittedLearner::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.predict_proba(&d.x).unwrap(), m.predict_proba(&d.x).unwrap());
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["format_version"] = 99.into();
        assert!(FittedLearner::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn identical_trees_make_forest_size_irrelevant() {
        // constant features: every tree is the root leaf
        let x = FeatureMatrix::from_rows(names(2), &vec![vec![1.0, 1.0]; 40]).unwrap();
        let y: Vec<f64> = (0..40).map(f64::from).collect();
        let d = Dataset::new(x, y).unwrap();
        let base = LearnerSpec::new(LearnerKind::RandomForest, Task::Regression).with_params(Hyperparams {
            n_estimators: 3,
            bootstrap: false,
            ..Default::default()
        });
        let mut big = base.clone();
        big.params.n_estimators = 30;
        assert_eq!(fit(&base, &d, 1).unwrap().predict(&d.x).unwrap(), fit(&big, &d, 1).unwrap().predict(&d.x).unwrap());
    }
}
