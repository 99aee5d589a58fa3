//! Replica-level summaries and percentile bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean with standard error and a bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            std_err: 0.0,
            ci_low: value,
            ci_high: value,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub const MIN_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapParams {
    pub resamples: usize,
    /// Seed of the resampling stream, independent of the simulation seed.
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        BootstrapParams {
            resamples: 500,
            seed: 0x5eed_b007,
            level: 0.95,
        }
    }
}

impl BootstrapParams {
    pub fn validate(&self) -> Result<()> {
        if self.resamples < MIN_RESAMPLES {
            return Err(invalid(format!(
                "bootstrap needs >= {MIN_RESAMPLES} resamples, got {}",
                self.resamples
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }

    /// Percentile interval of `stat` over replica-index resamples.
    /// `stat` receives the resampled indices.
    pub fn interval(&self, n: usize, stat: impl Fn(&[usize]) -> f64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut idx = vec![0usize; n];
        let mut values: Vec<f64> = (0..self.resamples)
            .map(|_| {
                idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
                stat(&idx)
            })
            .filter(|v| v.is_finite())
            .collect();
        if values.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        values.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - self.level);
        let pick = |q: f64| {
            let k = (q * (values.len() - 1) as f64).round() as usize;
            values[k.min(values.len() - 1)]
        };
        (pick(tail), pick(1.0 - tail))
    }

    pub fn mean(&self, xs: &[f64]) -> Estimate {
        let (mean, std_err) = mean_se(xs);
        let (ci_low, ci_high) = self.interval(xs.len(), |idx| idx.iter().map(|&k| xs[k]).sum::<f64>() / idx.len() as f64);
        Estimate {
            mean,
            std_err,
            ci_low,
            ci_high,
        }
    }

    /// `mean(num) / mean(den)` with both resampled jointly.
    pub fn ratio(&self, num: &[f64], den: &[f64]) -> Estimate {
        assert_eq!(num.len(), den.len());
        let ratio = |idx: &[usize]| {
            let (a, b) = idx.iter().fold((0.0, 0.0), |(a, b), &k| (a + num[k], b + den[k]));
            a / b
        };
        let all: Vec<usize> = (0..num.len()).collect();
        let mean = ratio(&all);
        // delta-method standard error
        let (md, _) = mean_se(den);
        let resid: Vec<f64> = num.iter().zip(den).map(|(a, b)| (a - mean * b) / md).collect();
        let (_, std_err) = mean_se(&resid);
        let (ci_low, ci_high) = self.interval(num.len(), ratio);
        Estimate {
            mean,
            std_err,
            ci_low,
            ci_high,
        }
    }
}

/// True if all intervals share a common point.
pub fn intervals_overlap(cis: &[(f64, f64)]) -> bool {
    let lo = cis.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let hi = cis.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    lo <= hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let xs: Vec<f64> = (0..200).map(|k| (k as f64 * 0.37).sin()).collect();
        let b = BootstrapParams::default();
        let e = b.mean(&xs);
        assert!(e.ci_low < e.mean && e.mean < e.ci_high);
        // roughly mean +- 1.96 se
        let half = 0.5 * (e.ci_high - e.ci_low);
        assert!((half / (1.96 * e.std_err) - 1.0).abs() < 0.25, "{half} vs {}", e.std_err);
        assert_eq!(b.mean(&xs), e);
    }

    #[test]
    fn constant_ratio_is_exact() {
        let den: Vec<f64> = (1..50).map(|k| k as f64).collect();
        let num: Vec<f64> = den.iter().map(|d| 3.0 * d).collect();
        let e = BootstrapParams::default().ratio(&num, &den);
        assert!((e.mean - 3.0).abs() < 1e-14);
        assert!((e.ci_low - 3.0).abs() < 1e-14 && (e.ci_high - 3.0).abs() < 1e-14);
    }

    #[test]
    fn resample_floor() {
        let b = BootstrapParams {
            resamples: 100,
            ..Default::default()
        };
        assert!(b.validate().is_err());
        assert!(BootstrapParams::default().validate().is_ok());
    }

    #[test]
    fn overlap() {
        assert!(intervals_overlap(&[(0.0, 2.0), (1.0, 3.0), (1.5, 1.6)]));
        assert!(!intervals_overlap(&[(0.0, 1.0), (1.1, 2.0)]));
    }
}
