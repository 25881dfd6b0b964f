use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, TrainView, Tree, TreeParams};
use crate::rng::{stream_rng, LEARNERS_FIT};
use crate::stats::sigmoid;

/// Additive ensemble of shallow regression trees on the raw score scale.
/// With `logistic` set the score is a log-odds and leaves hold Newton steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub init: f64,
    pub learning_rate: f64,
    pub logistic: bool,
    pub trees: Vec<Tree>,
}

impl Gbt {
    pub(crate) fn fit(
        data: TrainView<'_>,
        params: &TreeParams,
        n_rounds: usize,
        learning_rate: f64,
        subsample: f64,
        logistic: bool,
        seed: u64,
    ) -> Gbt {
        let n = data.y.len();
        let wsum: f64 = data.w.iter().sum();
        let ybar = data.y.iter().zip(data.w).map(|(y, w)| y * w).sum::<f64>() / wsum;
        let init = if logistic {
            let p = ybar.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        } else {
            ybar
        };
        let mut gbt = Gbt { init, learning_rate, logistic, trees: Vec::new() };
        if learning_rate == 0.0 {
            return gbt;
        }
        let params = TreeParams { criterion: Criterion::Variance, ..*params };
        let mut score = vec![init; n];
        let m = ((subsample * n as f64).round() as usize).clamp(1, n);
        for round in 0..n_rounds {
            let mut rng = stream_rng(seed, LEARNERS_FIT, round as u64);
            let resid: Vec<f64> = if logistic {
                data.y.iter().zip(&score).map(|(y, f)| y - sigmoid(*f)).collect()
            } else {
                data.y.iter().zip(&score).map(|(y, f)| y - f).collect()
            };
            let w: Vec<f64> = if m < n {
                let mut w = vec![0.0; n];
                for i in index::sample(&mut rng, n, m) {
                    w[i] = data.w[i];
                }
                w
            } else {
                data.w.to_vec()
            };
            let view = TrainView { x: data.x, n_cols: data.n_cols, y: &resid, w: &w };
            let mut tree = Tree::fit(view, &params, &mut rng);
            if logistic {
                let mut num = vec![0.0; tree.n_nodes()];
                let mut den = vec![0.0; tree.n_nodes()];
                for i in (0..n).filter(|&i| w[i] > 0.0) {
                    let leaf = tree.apply(&data.x[i * data.n_cols..(i + 1) * data.n_cols]);
                    let p = sigmoid(score[i]);
                    num[leaf] += w[i] * resid[i];
                    den[leaf] += w[i] * p * (1.0 - p);
                }
                for k in (0..tree.n_nodes()).filter(|&k| tree.feature[k] < 0) {
                    tree.value[k] = if den[k] > 1e-12 { num[k] / den[k] } else { 0.0 };
                }
            }
            for (i, s) in score.iter_mut().enumerate() {
                *s += learning_rate * tree.predict_row(&data.x[i * data.n_cols..(i + 1) * data.n_cols]);
            }
            gbt.trees.push(tree);
        }
        gbt
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let f = self.raw_score(row);
        if self.logistic {
            sigmoid(f)
        } else {
            f
        }
    }
}
