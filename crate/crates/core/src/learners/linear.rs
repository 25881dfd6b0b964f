use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

/// Minimum-norm weighted least squares via SVD; singular values below
/// `1e-12 * max` are treated as zero.
pub fn weighted_lstsq(x: &[f64], n_cols: usize, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("least squares with no rows".into()));
    }
    if n_cols == 0 {
        return Ok(Vec::new());
    }
    let a = DMatrix::from_fn(n, n_cols, |i, j| w[i].sqrt() * x[i * n_cols + j]);
    let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd.solve(&b, (1e-12 * smax).max(f64::MIN_POSITIVE)).map_err(|e| Error::Estimation(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

impl Linear {
    pub(crate) fn fit(x: &[f64], n_cols: usize, y: &[f64], w: &[f64], intercept: bool) -> Result<Linear> {
        let n = y.len();
        if !intercept {
            return Ok(Linear { coef: weighted_lstsq(x, n_cols, y, w)?, intercept: 0.0 });
        }
        let ws: f64 = w.iter().sum();
        if ws <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        let mut xm = vec![0.0; n_cols];
        let mut ym = 0.0;
        for i in 0..n {
            ym += w[i] * y[i];
            for (j, m) in xm.iter_mut().enumerate() {
                *m += w[i] * x[i * n_cols + j];
            }
        }
        ym /= ws;
        xm.iter_mut().for_each(|m| *m /= ws);
        let xc: Vec<f64> = (0..n * n_cols).map(|k| x[k] - xm[k % n_cols]).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let coef = weighted_lstsq(&xc, n_cols, &yc, w)?;
        let intercept = ym - coef.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
        Ok(Linear { coef, intercept })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let m = Linear::fit(&x, 1, &y, &[1.0; 10], true).unwrap();
        assert!((m.coef[0] - 3.0).abs() < 1e-9);
        assert!((m.intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicated_column_splits_weight() {
        // rank-deficient: minimum-norm solution shares the slope
        let x: Vec<f64> = (0..8).flat_map(|i| [f64::from(i), f64::from(i)]).collect();
        let y: Vec<f64> = (0..8).map(|i| 2.0 * f64::from(i)).collect();
        let m = Linear::fit(&x, 2, &y, &[1.0; 8], true).unwrap();
        assert!((m.coef[0] - 1.0).abs() < 1e-9 && (m.coef[1] - 1.0).abs() < 1e-9);
    }
}
