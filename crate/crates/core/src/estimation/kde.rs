//! Gaussian kernel smoothing of univariate samples.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

#[derive(Debug, Clone)]
pub struct Kde {
    xs: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    pub fn new(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InsufficientData("kernel smoothing needs at least two finite points".into()));
        }
        let h = silverman_bandwidth(xs);
        Self::with_bandwidth(xs, if h > 0.0 { h } else { 1e-9 })
    }

    pub fn with_bandwidth(xs: &[f64], bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::Domain("bandwidth must be positive".into()));
        }
        let mut xs = xs.to_vec();
        xs.sort_by(f64::total_cmp);
        Ok(Kde { xs, bandwidth })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Points within eight bandwidths of `x`.
    fn window(&self, x: f64) -> &[f64] {
        let reach = 8.0 * self.bandwidth;
        let lo = self.xs.partition_point(|v| *v < x - reach);
        let hi = self.xs.partition_point(|v| *v <= x + reach);
        &self.xs[lo..hi]
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let n = Normal::standard();
        let h = self.bandwidth;
        self.window(x).iter().map(|v| n.pdf((x - v) / h)).sum::<f64>() / (self.xs.len() as f64 * h)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = Normal::standard();
        let h = self.bandwidth;
        let reach = 8.0 * h;
        let below = self.xs.partition_point(|v| *v < x - reach) as f64;
        let near: f64 = self.window(x).iter().map(|v| n.cdf((x - v) / h)).sum();
        (below + near) / self.xs.len() as f64
    }
}

/// Empirical CDF of a sample at `x`.
pub fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter()
        .chain(b.iter())
        .map(|x| (empirical_cdf(&a, *x) - empirical_cdf(&b, *x)).abs())
        .fold(0.0, f64::max)
}
