//! Monte-Carlo permutation Shapley values.
//!
//! For each sampled permutation a background row `z` is walked towards the
//! instance `x` one feature at a time; the change in model output at each
//! step is credited to the feature that moved. Background rows are visited in
//! a seeded round-robin order so every row is used equally often.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;
use crate::learners::Predictor;
use crate::panel::fmt_num;
use crate::rng::{stream_rng, SHAPLEY_MC};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapConfig {
    pub n_permutations: usize,
    /// Background rows kept after seeded subsampling.
    pub background_size: usize,
    /// Rows explained when aggregating; larger sets are subsampled.
    pub max_instances: Option<usize>,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self { n_permutations: 64, background_size: 256, max_instances: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceShap {
    pub values: Vec<f64>,
    /// Model output at the instance.
    pub fx: f64,
    /// Standard error of the sampled `f(x) - f(z)` differences.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapReport {
    pub feature_names: Vec<String>,
    /// Row-major, one row per explained instance.
    pub values: Vec<Vec<f64>>,
    pub fx: Vec<f64>,
    pub se: Vec<f64>,
    /// Mean model output over the background.
    pub base: f64,
    pub mean_abs: Vec<f64>,
}

impl ShapReport {
    pub fn aggregate(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|j| self.mean_abs[j])
    }

    pub fn write_values_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "instance,{},fx,se", self.feature_names.join(",")).expect("write to vec");
        for (i, row) in self.values.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            writeln!(out, "{i},{},{},{}", vals.join(","), fmt_num(self.fx[i]), fmt_num(self.se[i]))
                .expect("write to vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_aggregates_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "feature,mean_abs_shap").expect("write to vec");
        for (n, v) in self.feature_names.iter().zip(&self.mean_abs) {
            writeln!(out, "{n},{}", fmt_num(*v)).expect("write to vec");
        }
        writeln!(out, "base,{}", fmt_num(self.base)).expect("write to vec");
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn aligned(model: &(impl Predictor + ?Sized), m: &FeatureMatrix) -> Result<FeatureMatrix> {
    if m.names() == model.feature_names() {
        Ok(m.clone())
    } else {
        m.alignment_to(model.feature_names())?;
        m.select_columns(model.feature_names())
    }
}

/// Shapley values of one instance; `background` and `instance` are in the
/// model's feature order.
pub fn mc_shapley<P: Predictor + ?Sized>(
    model: &P,
    background: &FeatureMatrix,
    instance: &[f64],
    n_permutations: usize,
    seed: u64,
    stream_index: u64,
) -> Result<InstanceShap> {
    let p = model.feature_names().len();
    if background.names() != model.feature_names() || instance.len() != p {
        return Err(Error::Schema("background/instance columns differ from the model's features".into()));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidInput("n_permutations must be >= 1".into()));
    }
    let m = background.n_rows();
    if m == 0 {
        return Err(Error::Empty("Shapley background has no rows".into()));
    }
    let mut rng = stream_rng(seed, SHAPLEY_MC, stream_index);
    let mut bg_order: Vec<usize> = (0..m).collect();
    bg_order.shuffle(&mut rng);
    let mut perm: Vec<usize> = (0..p).collect();
    let fx = model.predict_one(instance);
    let mut phi = vec![0.0; p];
    let mut diffs = Vec::with_capacity(n_permutations);
    let mut cur = vec![0.0; p];
    for k in 0..n_permutations {
        perm.shuffle(&mut rng);
        cur.copy_from_slice(background.row(bg_order[k % m]));
        let mut prev = model.predict_one(&cur);
        diffs.push(fx - prev);
        for &j in &perm {
            cur[j] = instance[j];
            let next = model.predict_one(&cur);
            phi[j] += next - prev;
            prev = next;
        }
    }
    let np = n_permutations as f64;
    phi.iter_mut().for_each(|v| *v /= np);
    let se = if n_permutations > 1 { crate::stats::sample_std(&diffs) / np.sqrt() } else { 0.0 };
    Ok(InstanceShap { values: phi, fx, se })
}

/// Explain every row of `rows` against a seeded subsample of `background`.
pub fn explain<P: Predictor + ?Sized>(
    model: &P,
    rows: &FeatureMatrix,
    background: &FeatureMatrix,
    cfg: &ShapConfig,
    seed: u64,
) -> Result<ShapReport> {
    if rows.n_rows() == 0 {
        return Err(Error::Empty("no rows to explain".into()));
    }
    if background.n_rows() == 0 {
        return Err(Error::Empty("Shapley background has no rows".into()));
    }
    let rows = aligned(model, rows)?;
    let mut bg = aligned(model, background)?;
    // index u64::MAX and MAX-1 are reserved for the subsampling draws
    if bg.n_rows() > cfg.background_size {
        let pick = index::sample(&mut stream_rng(seed, SHAPLEY_MC, u64::MAX), bg.n_rows(), cfg.background_size);
        let mut pick = pick.into_vec();
        pick.sort_unstable();
        bg = bg.select_rows(&pick);
    }
    let rows = match cfg.max_instances {
        Some(k) if rows.n_rows() > k => {
            let mut pick = index::sample(&mut stream_rng(seed, SHAPLEY_MC, u64::MAX - 1), rows.n_rows(), k).into_vec();
            pick.sort_unstable();
            rows.select_rows(&pick)
        }
        _ => rows,
    };
    let per: Vec<InstanceShap> = (0..rows.n_rows())
        .into_par_iter()
        .map(|i| mc_shapley(model, &bg, rows.row(i), cfg.n_permutations, seed, i as u64))
        .collect::<Result<_>>()?;
    let base = bg.rows().map(|r| model.predict_one(r)).sum::<f64>() / bg.n_rows() as f64;
    let p = bg.n_cols();
    let mut mean_abs = vec![0.0; p];
    for s in &per {
        for (a, v) in mean_abs.iter_mut().zip(&s.values) {
            *a += v.abs();
        }
    }
    mean_abs.iter_mut().for_each(|a| *a /= per.len() as f64);
    Ok(ShapReport {
        feature_names: bg.names().to_vec(),
        fx: per.iter().map(|s| s.fx).collect(),
        se: per.iter().map(|s| s.se).collect(),
        values: per.into_iter().map(|s| s.values).collect(),
        base,
        mean_abs,
    })
}

/// Per-feature mean of |Shapley value| over `rows`.
pub fn mean_abs_shap<P: Predictor + ?Sized>(
    model: &P,
    rows: &FeatureMatrix,
    background: &FeatureMatrix,
    cfg: &ShapConfig,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let r = explain(model, rows, background, cfg, seed)?;
    Ok(r.feature_names.into_iter().zip(r.mean_abs).collect())
}
