//! Monte Carlo bookkeeping: running moments, batch means, regression and
//! binomial confidence bounds.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// The value is a lower bound only (signal below noise, censoring, overflow).
    LowerBound,
    /// The value is an upper bound only.
    UpperBound,
    /// First and second halves of the series disagree.
    Nonstationary,
    /// The requested exponential moment is expected to diverge.
    Divergent,
    /// Some samples were censored at the time cap.
    Censored,
    /// Fewer than 20 autocorrelation times per batch were available.
    UnderResolved,
    /// At least one trajectory blew up and was excluded.
    BlowUpsExcluded,
}

/// A Monte Carlo estimate with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub value: f64,
    /// Half-width of the 95% confidence interval.
    pub ci: f64,
    pub std_err: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, value: f64, std_err: f64, n: usize) -> Self {
        Self { name: name.into(), value, ci: Z95 * std_err, std_err, n, flags: Vec::new() }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, 0.0, 1)
    }

    pub fn from_stats(name: impl Into<String>, s: &RunningStats) -> Self {
        Self::new(name, s.mean(), s.std_err(), s.count())
    }

    pub fn with_flag(mut self, flag: Flag) -> Self {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
        self
    }

    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn lower(&self) -> f64 {
        self.value - self.ci
    }

    pub fn upper(&self) -> f64 {
        self.value + self.ci
    }
}

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        iter.into_iter().for_each(|v| s.push(v));
        s
    }
}

/// Integrated autocorrelation time in samples, with Sokal's self-consistent
/// window `W ≥ 5 τ(W)`.
pub fn autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Batch-means analysis of an evenly sampled stationary series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub mean_std_err: f64,
    /// Long-run variance `lim (1/t) Var(∫₀ᵗ φ ds)` in time units.
    pub long_run_variance: f64,
    pub long_run_variance_std_err: f64,
    pub n_batches: usize,
    /// Samples per batch.
    pub batch_len: usize,
    /// Integrated autocorrelation time in samples.
    pub tau_int: f64,
    pub under_resolved: bool,
}

pub const MIN_BATCHES: usize = 30;
pub const MAX_BATCHES: usize = 100;

/// Splits `series` (sampled every `sample_dt`) into 30–100 batches of at least
/// 20 autocorrelation times each when the series is long enough.
pub fn batch_means(series: &[f64], sample_dt: f64) -> Result<BatchMeans, StatsError> {
    let n = series.len();
    if n < 2 * MIN_BATCHES {
        return Err(StatsError::InsufficientSamples { needed: 2 * MIN_BATCHES, got: n });
    }
    let tau = autocorrelation_time(series);
    let affordable = (n as f64 / (20.0 * tau)).floor() as usize;
    let n_batches = affordable.clamp(MIN_BATCHES, MAX_BATCHES);
    let batch_len = n / n_batches;
    let start = n - n_batches * batch_len;
    let means: RunningStats = series[start..]
        .chunks_exact(batch_len)
        .map(|c| c.iter().sum::<f64>() / batch_len as f64)
        .collect();
    let duration = batch_len as f64 * sample_dt;
    let lrv = means.variance() * duration;
    Ok(BatchMeans {
        mean: means.mean(),
        mean_std_err: means.std_err(),
        long_run_variance: lrv,
        long_run_variance_std_err: lrv * (2.0 / (n_batches - 1) as f64).sqrt(),
        n_batches,
        batch_len,
        tau_int: tau,
        under_resolved: affordable < MIN_BATCHES,
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_std_err = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Some(LinearFit { slope, intercept, slope_std_err, r_squared, n })
}

/// Exact two-sided Clopper–Pearson interval for `k` successes out of `n`.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0);
    let alpha = 1.0 - confidence;
    let (k, n) = (k as f64, n as f64);
    let lo = if k == 0.0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("positive shapes").inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("positive shapes").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("positive sd").cdf(x)
}

/// Kolmogorov distance between the weighted empirical law of `samples` and
/// a reference CDF.
pub fn ks_distance(samples: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<(f64, f64)> = samples.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        let f = cdf(v);
        d = d.max((f - acc / total).abs());
        while i < sorted.len() && sorted[i].0 == v {
            acc += sorted[i].1;
            i += 1;
        }
        d = d.max((f - acc / total).abs());
    }
    d
}

/// Numerically stable `log(mean(exp(v)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (s / values.len() as f64).ln()
}
