//! Running moments and batch-means standard errors.

use serde::{Deserialize, Serialize};

/// Welford online mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.std_error())
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// `(value - target) / std_error`; zero when both agree exactly, infinite
    /// when the standard error vanishes but the values differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.value - target;
        if diff == 0.0 {
            0.0
        } else if self.std_error > 0.0 {
            diff / self.std_error
        } else {
            diff.signum() * f64::INFINITY
        }
    }

    /// True when `target` lies within `k` standard errors.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        self.z_score(target).abs() <= k
    }
}

/// Batch-means estimate from consecutive, equally sized batches of observations.
///
/// Trailing observations that do not fill a whole batch are dropped.
pub fn batch_means(values: &[f64], batches: usize) -> Estimate {
    assert!(batches >= 2, "batch means needs at least two batches");
    let size = values.len() / batches;
    if size == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mut acc = Running::new();
    for b in 0..batches {
        let chunk = &values[b * size..(b + 1) * size];
        acc.push(chunk.iter().sum::<f64>() / size as f64);
    }
    acc.estimate()
}

/// Batch-means estimate of a ratio `sum(numerators) / sum(denominators)`, e.g.
/// welfare per unit time, using per-batch ratios.
pub fn batch_ratio(numerators: &[f64], denominators: &[f64], batches: usize) -> Estimate {
    assert_eq!(numerators.len(), denominators.len());
    assert!(batches >= 2, "batch means needs at least two batches");
    let size = numerators.len() / batches;
    if size == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mut acc = Running::new();
    let (mut num_total, mut den_total) = (0.0, 0.0);
    for b in 0..batches {
        let range = b * size..(b + 1) * size;
        let num: f64 = numerators[range.clone()].iter().sum();
        let den: f64 = denominators[range].iter().sum();
        num_total += num;
        den_total += den;
        acc.push(num / den);
    }
    Estimate::new(num_total / den_total, acc.std_error())
}
