use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{TrainView, Tree, TreeParams};
use crate::rng::{stream_rng, LEARNERS_FIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Each tree draws its own bootstrap (as multiplicity weights) and split
    /// features from stream `learners.fit`, item = tree index.
    pub(crate) fn fit(data: TrainView<'_>, params: &TreeParams, n_trees: usize, bootstrap: bool, seed: u64) -> Forest {
        let n = data.y.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(seed, LEARNERS_FIT, t as u64);
                let w: Vec<f64> = if bootstrap {
                    let mut counts = vec![0.0; n];
                    for _ in 0..n {
                        counts[rng.random_range(0..n)] += 1.0;
                    }
                    counts.iter().zip(data.w).map(|(c, w)| c * w).collect()
                } else {
                    data.w.to_vec()
                };
                Tree::fit(TrainView { w: &w, ..data }, params, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}
