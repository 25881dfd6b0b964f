use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

/// Relative residual norm under which a column counts as a linear
/// combination of the columns before it.
pub const RANK_TOL: f64 = 1e-10;

/// Second-stage linear model of the conditional effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub intercept: f64,
    /// Retained covariates and their slopes.
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Covariates removed because they were collinear with earlier columns.
    pub dropped: Vec<String>,
    pub n_rows: usize,
    pub r2: Option<f64>,
}

impl CateModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coef[j])
    }

    /// Full-schema row; dropped columns are ignored.
    pub fn predict_row(&self, names: &[String], row: &[f64]) -> Result<f64> {
        let mut v = self.intercept;
        for (n, b) in self.names.iter().zip(&self.coef) {
            let j = names.iter().position(|m| m == n).ok_or_else(|| Error::Schema(format!("missing feature `{n}`")))?;
            v += b * row[j];
        }
        Ok(v)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let idx = self
            .names
            .iter()
            .map(|n| x.column_index(n).ok_or_else(|| Error::Schema(format!("missing feature `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..x.n_rows())
            .map(|i| {
                let r = x.row(i);
                self.intercept + idx.iter().zip(&self.coef).map(|(&j, b)| b * r[j]).sum::<f64>()
            })
            .collect())
    }
}

/// OLS with intercept of `y` on the columns of `x`, dropping columns that
/// are (numerically) spanned by the intercept and earlier columns.
pub fn fit_cate_ols(x: &FeatureMatrix, y: &[f64]) -> Result<CateModel> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::Schema(format!("{n} rows but {} responses", y.len())));
    }
    if n == 0 {
        return Err(Error::Empty("second stage has no rows".into()));
    }
    if n < x.n_cols() + 1 {
        return Err(Error::RankDeficient(format!("{n} rows for {} coefficients", x.n_cols() + 1)));
    }
    // modified Gram-Schmidt to pick an independent column set
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = col;
        for q in &basis {
            let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= RANK_TOL * norm0 {
            dropped.push(x.names()[j].clone());
        } else {
            r.iter_mut().for_each(|v| *v /= norm);
            basis.push(r);
            keep.push(j);
        }
    }
    let p = keep.len() + 1;
    let a = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { x.get(i, keep[k - 1]) });
    let b = DVector::from_column_slice(y);
    let qr = a.qr();
    let rhs = qr.q().transpose() * &b;
    let beta =
        qr.r().solve_upper_triangular(&rhs).ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    let fitted = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { x.get(i, keep[k - 1]) }) * &beta;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(v, f)| (v - f).powi(2)).sum();
    Ok(CateModel {
        intercept: beta[0],
        names: keep.iter().map(|&j| x.names()[j].clone()).collect(),
        coef: beta.iter().skip(1).copied().collect(),
        dropped,
        n_rows: n,
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(names: &[&str], cols: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_columns(names.iter().map(|s| s.to_string()).collect(), &cols).unwrap()
    }

    #[test]
    fn exact_linear_effect() {
        let x1: Vec<f64> = (0..20).map(|i| f64::from(i) * 0.7 - 3.0).collect();
        let y: Vec<f64> = x1.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = fit_cate_ols(&m(&["x1"], vec![x1]), &y).unwrap();
        assert!((c.coef[0] - 2.0).abs() < 1e-9);
        assert!((c.intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_effect_has_zero_slopes() {
        let x1: Vec<f64> = (0..15).map(|i| f64::from(i * i % 7)).collect();
        let x2: Vec<f64> = (0..15).map(f64::from).collect();
        let c = fit_cate_ols(&m(&["a", "b"], vec![x1, x2]), &[3.5; 15]).unwrap();
        assert!((c.intercept - 3.5).abs() < 1e-9);
        assert!(c.coef.iter().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn collinear_and_constant_columns_dropped() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let k = vec![4.0; 10];
        let y: Vec<f64> = a.iter().map(|v| v - 2.0).collect();
        let c = fit_cate_ols(&m(&["a", "b", "k"], vec![a, b, k]), &y).unwrap();
        assert_eq!(c.names, vec!["a".to_string()]);
        assert_eq!(c.dropped, vec!["b".to_string(), "k".to_string()]);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let c = fit_cate_ols(&m(&["a", "b"], vec![vec![1.0, 2.0], vec![0.0, 5.0]]), &[1.0, 2.0]);
        assert!(matches!(c, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn prediction_is_affine() {
        let x: Vec<f64> = (0..12).map(|i| f64::from(i % 5)).collect();
        let z: Vec<f64> = (0..12).map(|i| f64::from(i) / 3.0).collect();
        let y: Vec<f64> = (0..12).map(|i| f64::from(i * 7 % 11)).collect();
        let names = vec!["x".to_string(), "z".to_string()];
        let c = fit_cate_ols(&m(&["x", "z"], vec![x, z]), &y).unwrap();
        let (u, v) = ([1.5, -2.0], [0.25, 4.0]);
        let comb = [2.0 * u[0] + 3.0 * v[0], 2.0 * u[1] + 3.0 * v[1]];
        let lhs = c.predict_row(&names, &comb).unwrap();
        let rhs =
            2.0 * c.predict_row(&names, &u).unwrap() + 3.0 * c.predict_row(&names, &v).unwrap() - 4.0 * c.intercept;
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
