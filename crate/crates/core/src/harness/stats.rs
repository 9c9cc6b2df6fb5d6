//! Replica statistics and log-log slope fits.

use rand::Rng;
use serde::Serialize;

use crate::rng::{stream, BOOTSTRAP_LANE};

/// Mean, unbiased variance and standard error of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            n,
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
        }
    }
}

/// Ordinary least squares `y = intercept + slope · x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Log-log slope of replica means against `m`, with a percentile bootstrap
/// interval from resampling replicas within each `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn fit_log_log(ms: &[usize], samples: &[Vec<f64>], seed: u64) -> SlopeFit {
    let lx: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let means = |sets: &[Vec<f64>]| -> Vec<f64> { sets.iter().map(|s| (s.iter().sum::<f64>() / s.len() as f64).ln()).collect() };
    let (intercept, slope) = ols(&lx, &means(samples));
    let mut rng = stream(seed, 0, BOOTSTRAP_LANE);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let resampled: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect())
                .collect();
            ols(&lx, &means(&resampled)).1
        })
        .filter(|s: &f64| s.is_finite())
        .collect();
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| {
        slopes
            .get(((slopes.len() as f64 - 1.0) * p).round() as usize)
            .copied()
            .unwrap_or(f64::NAN)
    };
    SlopeFit {
        slope,
        intercept,
        ci_low: q(0.025),
        ci_high: q(0.975),
        resamples: BOOTSTRAP_RESAMPLES,
    }
}
