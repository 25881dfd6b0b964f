use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Logistic {
    /// Damped Newton on standardized columns with an L2 penalty `l2` on the
    /// slopes (plus a tiny jitter everywhere to keep the Hessian invertible).
    pub(crate) fn fit(x: &[f64], n_cols: usize, y: &[f64], w: &[f64], intercept: bool, l2: f64) -> Result<Logistic> {
        let n = y.len();
        let ws: f64 = w.iter().sum();
        if ws <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        let mut mean = vec![0.0; n_cols];
        let mut scale = vec![1.0; n_cols];
        for j in 0..n_cols {
            let m = if intercept { (0..n).map(|i| w[i] * x[i * n_cols + j]).sum::<f64>() / ws } else { 0.0 };
            let v = (0..n).map(|i| w[i] * (x[i * n_cols + j] - m).powi(2)).sum::<f64>() / ws;
            mean[j] = m;
            if v.sqrt() > 1e-12 {
                scale[j] = v.sqrt();
            }
        }
        let off = usize::from(intercept);
        let p = n_cols + off;
        let design = DMatrix::from_fn(n, p, |i, j| {
            if j < off {
                1.0
            } else {
                let c = j - off;
                (x[i * n_cols + c] - mean[c]) / scale[c]
            }
        });
        let penalty = |j: usize| if j < off { JITTER } else { l2 + JITTER };
        let objective = |beta: &DVector<f64>| -> f64 {
            let eta = &design * beta;
            let mut ll = 0.0;
            for i in 0..n {
                ll += w[i] * (y[i] * eta[i] - log1pexp(eta[i]));
            }
            ll - 0.5 * (0..p).map(|j| penalty(j) * beta[j] * beta[j]).sum::<f64>()
        };

        let mut beta = DVector::zeros(p);
        let mut obj = objective(&beta);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < MAX_ITER {
            iterations += 1;
            let eta = &design * &beta;
            let mut grad = DVector::zeros(p);
            let mut hess = DMatrix::zeros(p, p);
            for i in 0..n {
                let pi = sigmoid(eta[i]);
                let r = w[i] * (y[i] - pi);
                let h = w[i] * pi * (1.0 - pi);
                let row = design.row(i);
                for a in 0..p {
                    grad[a] += r * row[a];
                    for b in 0..=a {
                        hess[(a, b)] += h * row[a] * row[b];
                    }
                }
            }
            for a in 0..p {
                grad[a] -= penalty(a) * beta[a];
                hess[(a, a)] += penalty(a);
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            let step = match hess.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => hess.lu().solve(&grad).ok_or_else(|| Error::Estimation("singular logistic Hessian".into()))?,
            };
            let mut t = 1.0;
            let mut next = &beta + &step;
            let mut next_obj = objective(&next);
            while next_obj < obj && t > 1e-10 {
                t *= 0.5;
                next = &beta + &step * t;
                next_obj = objective(&next);
            }
            let moved = step.amax() * t;
            if next_obj >= obj {
                beta = next;
                obj = next_obj;
            }
            if moved < TOLERANCE {
                converged = true;
                break;
            }
        }
        let coef: Vec<f64> = (0..n_cols).map(|j| beta[j + off] / scale[j]).collect();
        let b0 = if intercept { beta[0] } else { 0.0 };
        let intercept = b0 - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(Logistic { coef, intercept, iterations, converged })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.intercept + self.coef.iter().zip(row).map(|(b, x)| b * x).sum::<f64>())
    }
}
