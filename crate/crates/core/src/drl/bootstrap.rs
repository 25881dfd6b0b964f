use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, DRL_BOOTSTRAP};
use crate::stats::quantile_sorted;

/// Resamples lacking a treatment class are redrawn at most this many times.
pub const MAX_REDRAWS: usize = 10;
pub const MIN_REPLICATES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    /// One statistic vector per replicate, in replicate order.
    pub draws: Vec<Vec<f64>>,
    pub redraws: usize,
}

impl BootstrapDraws {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }
}

/// Row resampling bootstrap. `stat` receives the resampled row indices and a
/// replicate seed and re-estimates everything from scratch.
pub fn bootstrap<F>(t: &[f64], b: usize, seed: u64, stat: F) -> Result<BootstrapDraws>
where
    F: Fn(&[usize], u64) -> Result<Vec<f64>> + Sync,
{
    if b < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!("bootstrap needs at least {MIN_REPLICATES} replicates, got {b}")));
    }
    let n = t.len();
    if n == 0 {
        return Err(Error::Empty("bootstrap over no rows".into()));
    }
    let out: Vec<(Vec<f64>, usize)> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, DRL_BOOTSTRAP, r as u64);
            let mut idx = vec![0usize; n];
            for attempt in 0..=MAX_REDRAWS {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                let treated = idx.iter().filter(|&&i| t[i] == 1.0).count();
                if treated > 0 && treated < n {
                    let s = stat(&idx, derive_seed(seed, "drl.bootstrap.fit", r as u64))?;
                    return Ok((s, attempt));
                }
            }
            Err(Error::SingleClass(format!(
                "bootstrap replicate {r} drew a single treatment class {} times",
                MAX_REDRAWS + 1
            )))
        })
        .collect::<Result<_>>()?;
    let redraws = out.iter().map(|(_, a)| a).sum();
    Ok(BootstrapDraws { draws: out.into_iter().map(|(d, _)| d).collect(), redraws })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub p_value: f64,
    /// Replicates with a finite statistic.
    pub n: usize,
}

/// Percentile 95% interval (widened, if needed, to contain `point`) and the
/// two-sided sign p-value, floored at `1/n`.
pub fn summarize(draws: &[f64], point: f64) -> Option<Interval> {
    let mut d: Vec<f64> = draws.iter().copied().filter(|v| v.is_finite()).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let le = d.iter().filter(|&&v| v <= 0.0).count() as f64 / n;
    let ge = d.iter().filter(|&&v| v >= 0.0).count() as f64 / n;
    let p_value = (2.0 * le.min(ge)).clamp(1.0 / n, 1.0);
    let low = quantile_sorted(&d, 0.025).min(point);
    let high = quantile_sorted(&d, 0.975).max(point);
    Some(Interval { low, high, p_value, n: d.len() })
}

pub fn p_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_statistic() {
        let t: Vec<f64> = (0..40).map(|i| f64::from(i % 2)).collect();
        let d = bootstrap(&t, 50, 1, |_, _| Ok(vec![-10.0])).unwrap();
        let iv = summarize(&d.column(0), -10.0).unwrap();
        assert_eq!((iv.low, iv.high), (-10.0, -10.0));
        assert_eq!(iv.p_value, 1.0 / 50.0);
    }

    #[test]
    fn replicates_are_seeded() {
        let t: Vec<f64> = (0..30).map(|i| f64::from(u8::from(i < 10))).collect();
        let mean = |idx: &[usize], _: u64| Ok(vec![idx.iter().map(|&i| i as f64).sum::<f64>() / idx.len() as f64]);
        let a = bootstrap(&t, 60, 7, mean).unwrap();
        let b = bootstrap(&t, 60, 7, mean).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, bootstrap(&t, 60, 8, mean).unwrap());
    }

    #[test]
    fn rare_class_triggers_redraw_or_error() {
        let mut t = vec![0.0; 200];
        t[0] = 1.0;
        // P(no treated row) ~ e^-1 per draw: 11 straight failures are unlikely
        let d = bootstrap(&t, 50, 3, |_, _| Ok(vec![0.0])).unwrap();
        assert!(d.redraws > 0);
        let all_zero = vec![0.0; 10];
        assert!(matches!(bootstrap(&all_zero, 50, 3, |_, _| Ok(vec![0.0])), Err(Error::SingleClass(_))));
        assert!(bootstrap(&t, 10, 3, |_, _| Ok(vec![0.0])).is_err());
    }

    #[test]
    fn stars() {
        assert_eq!(p_stars(0.0005), "***");
        assert_eq!(p_stars(0.005), "**");
        assert_eq!(p_stars(0.03), "*");
        assert_eq!(p_stars(0.05), "");
    }

    proptest! {
        #[test]
        fn interval_contains_median_and_point(mut v in proptest::collection::vec(-50.0f64..50.0, 1..300), point in -60.0f64..60.0) {
            let iv = summarize(&v, point).unwrap();
            v.sort_by(f64::total_cmp);
            let med = quantile_sorted(&v, 0.5);
            prop_assert!(iv.low <= med && med <= iv.high);
            prop_assert!(iv.low <= point && point <= iv.high);
            prop_assert!(iv.p_value > 0.0 && iv.p_value <= 1.0);
        }
    }
}
