//! CART trees stored as flat parallel arrays.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Variance,
    Gini,
}

impl Criterion {
    /// Weighted total impurity of a node from its weight, weighted target sum
    /// and weighted sum of squares.
    fn total(self, w: f64, s: f64, q: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Variance => (q - s * s / w).max(0.0),
            Criterion::Gini => (2.0 * s * (w - s) / w).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: f64,
    pub min_samples_leaf: f64,
    /// Non-constant features examined per node before settling.
    pub mtry: usize,
    pub criterion: Criterion,
}

/// Borrowed row-major training data.
#[derive(Clone, Copy)]
pub(crate) struct TrainView<'a> {
    pub x: &'a [f64],
    pub n_cols: usize,
    pub y: &'a [f64],
    pub w: &'a [f64],
}

impl TrainView<'_> {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n_cols + j]
    }
}

/// Node `k` is a leaf when `feature[k] < 0`; otherwise rows with
/// `x[feature] <= threshold` go to `left[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Tree {
    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.value.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.value.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.feature.iter().filter(|&&f| f < 0).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            if t.feature[k] < 0 {
                0
            } else {
                1 + go(t, t.left[k] as usize).max(go(t, t.right[k] as usize))
            }
        }
        go(self, 0)
    }

    /// Index of the leaf reached by `row`.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut k = 0;
        while self.feature[k] >= 0 {
            let f = self.feature[k] as usize;
            k = if row[f] <= self.threshold[k] { self.left[k] as usize } else { self.right[k] as usize };
        }
        k
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.value[self.apply(row)]
    }

    pub(crate) fn fit<R: Rng>(data: TrainView<'_>, params: &TreeParams, rng: &mut R) -> Tree {
        let mut rows: Vec<usize> = (0..data.y.len()).filter(|&i| data.w[i] > 0.0).collect();
        let mut tree =
            Tree { feature: Vec::new(), threshold: Vec::new(), left: Vec::new(), right: Vec::new(), value: Vec::new() };
        let mut features: Vec<usize> = (0..data.n_cols).collect();
        let mut buf: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
        // (node, start, end, depth) over `rows`
        let root = tree.push_leaf(0.0);
        let mut stack = vec![(root, 0usize, rows.len(), 0usize)];
        while let Some((node, start, end, depth)) = stack.pop() {
            let idx = &mut rows[start..end];
            let (mut w, mut s, mut q) = (0.0, 0.0, 0.0);
            for &i in idx.iter() {
                let (wi, yi) = (data.w[i], data.y[i]);
                w += wi;
                s += wi * yi;
                q += wi * yi * yi;
            }
            tree.value[node] = if w > 0.0 { s / w } else { 0.0 };
            let parent = params.criterion.total(w, s, q);
            if params.max_depth.is_some_and(|d| depth >= d)
                || w < params.min_samples_split
                || w < 2.0 * params.min_samples_leaf
                || parent <= 1e-12 * w.max(1.0)
            {
                continue;
            }
            if params.mtry < data.n_cols {
                features.shuffle(rng);
            }
            let Some(split) = best_split(data, idx, &features, params, parent, &mut buf) else {
                continue;
            };
            // in-place partition, order within each side preserved
            let mut left: Vec<usize> = Vec::new();
            let mut right: Vec<usize> = Vec::new();
            for &i in idx.iter() {
                if data.at(i, split.feature) <= split.threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            let mid = start + left.len();
            idx[..left.len()].copy_from_slice(&left);
            idx[left.len()..].copy_from_slice(&right);
            let l = tree.push_leaf(0.0);
            let r = tree.push_leaf(0.0);
            tree.feature[node] = split.feature as i32;
            tree.threshold[node] = split.threshold;
            tree.left[node] = l as u32;
            tree.right[node] = r as u32;
            stack.push((r, mid, end, depth + 1));
            stack.push((l, start, mid, depth + 1));
        }
        tree
    }
}

fn best_split(
    data: TrainView<'_>,
    idx: &[usize],
    features: &[usize],
    params: &TreeParams,
    parent: f64,
    buf: &mut Vec<(f64, f64, f64)>,
) -> Option<Split> {
    let mut best: Option<Split> = None;
    let min_gain = 1e-12 * parent.abs().max(1e-300);
    let mut visited = 0;
    for &f in features {
        if visited >= params.mtry && best.is_some() {
            break;
        }
        buf.clear();
        buf.extend(idx.iter().map(|&i| (data.at(i, f), data.y[i], data.w[i])));
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if buf[0].0 == buf[buf.len() - 1].0 {
            continue;
        }
        visited += 1;
        let (tw, ts, tq) =
            buf.iter().fold((0.0, 0.0, 0.0), |(w, s, q), &(_, y, wi)| (w + wi, s + wi * y, q + wi * y * y));
        let (mut lw, mut ls, mut lq) = (0.0, 0.0, 0.0);
        for k in 0..buf.len() - 1 {
            let (xk, yk, wk) = buf[k];
            lw += wk;
            ls += wk * yk;
            lq += wk * yk * yk;
            let next = buf[k + 1].0;
            if xk == next {
                continue;
            }
            let rw = tw - lw;
            if lw < params.min_samples_leaf || rw < params.min_samples_leaf {
                continue;
            }
            let child = params.criterion.total(lw, ls, lq) + params.criterion.total(rw, ts - ls, tq - lq);
            let gain = parent - child;
            if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (xk + next);
                if threshold >= next {
                    threshold = xk;
                }
                best = Some(Split { feature: f, threshold, gain });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> TreeParams {
        TreeParams {
            max_depth: None,
            min_samples_split: 2.0,
            min_samples_leaf: 1.0,
            mtry: usize::MAX,
            criterion: Criterion::Variance,
        }
    }

    fn fit(x: &[f64], n_cols: usize, y: &[f64], p: &TreeParams) -> Tree {
        let w = vec![1.0; y.len()];
        let view = TrainView { x, n_cols, y, w: &w };
        Tree::fit(view, p, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let t = fit(&x, 1, &[4.5; 20], &params());
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict_row(&[100.0]), 4.5);
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 10.0, 10.0];
        let t = fit(&x, 1, &y, &params());
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.threshold[0], 2.5);
        assert_eq!(t.predict_row(&[2.4]), 0.0);
        assert_eq!(t.predict_row(&[2.6]), 10.0);
    }

    #[test]
    fn fully_grown_tree_interpolates_distinct_points() {
        let x: Vec<f64> = (0..50).map(|i| f64::from(i * 7 % 50)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.3).sin()).collect();
        let t = fit(&x, 1, &y, &params());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((t.predict_row(&[*xi]) - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_and_leaf_limits_respected() {
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let y = x.clone();
        let p = TreeParams { max_depth: Some(3), ..params() };
        assert!(fit(&x, 1, &y, &p).depth() <= 3);
        let p = TreeParams { min_samples_leaf: 10.0, ..params() };
        let t = fit(&x, 1, &y, &p);
        // every leaf holds at least 10 rows
        let mut counts = vec![0; t.n_nodes()];
        for v in &x {
            counts[t.apply(&[*v])] += 1;
        }
        assert!(counts.iter().enumerate().all(|(k, &c)| t.feature[k] >= 0 || c >= 10));
    }

    #[test]
    fn gini_and_variance_agree_on_binary_targets() {
        let x: Vec<f64> = (0..40).map(|i| f64::from((i * 13) % 40)).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(v > 17.0 && v < 31.0))).collect();
        let a = fit(&x, 1, &y, &params());
        let b = fit(&x, 1, &y, &TreeParams { criterion: Criterion::Gini, ..params() });
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = [1.0, 2.0, 3.0];
        let y = [0.0, 100.0, 0.0];
        let w = [1.0, 0.0, 1.0];
        let view = TrainView { x: &x, n_cols: 1, y: &y, w: &w };
        let t = Tree::fit(view, &params(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict_row(&[2.0]), 0.0);
    }
}
