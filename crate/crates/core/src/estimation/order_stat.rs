//! Second order statistics and their inversion.

use crate::error::{domain, Result};

/// CDF of the second-highest of `j` iid draws whose parent CDF is `f`.
pub fn second_highest_cdf(f: f64, j: usize) -> f64 {
    let jf = j as f64;
    jf * f.powi(j as i32 - 1) - (jf - 1.0) * f.powi(j as i32)
}

/// Mixture of [`second_highest_cdf`] over `(j, weight)` pairs.
pub fn second_highest_cdf_mixture(f: f64, weights: &[(usize, f64)]) -> f64 {
    weights.iter().map(|(j, w)| w * second_highest_cdf(f, *j)).sum()
}

const TOL: f64 = 1e-10;

fn bisect(target: f64, map: impl Fn(f64) -> f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > TOL {
        let mid = 0.5 * (lo + hi);
        if map(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parent CDF value `F` with `second_highest_cdf(F, j) = g`.
pub fn order_stat_invert(g: f64, j: usize) -> Result<f64> {
    if j < 2 {
        return domain(format!("need at least two draws, got {j}"));
    }
    if !(0.0..=1.0).contains(&g) {
        return domain(format!("CDF value {g} outside [0, 1]"));
    }
    Ok(bisect(g, |f| second_highest_cdf(f, j)))
}

/// Inverts a mixture over the number of draws; weights must sum to one.
pub fn order_stat_invert_mixture(g: f64, weights: &[(usize, f64)]) -> Result<f64> {
    if weights.is_empty() || weights.iter().any(|(j, w)| *j < 2 || !(*w >= 0.0)) {
        return domain("mixture needs weights on draw counts of at least two");
    }
    if (weights.iter().map(|w| w.1).sum::<f64>() - 1.0).abs() > 1e-9 {
        return domain("mixture weights must sum to one");
    }
    if !(0.0..=1.0).contains(&g) {
        return domain(format!("CDF value {g} outside [0, 1]"));
    }
    Ok(bisect(g, |f| second_highest_cdf_mixture(f, weights)))
}

/// Parent CDF `W(t)` of costs from the CDF `g` of the second-lowest cost:
/// the second-lowest exceeds `t` exactly when the second-highest of the
/// survival values `1 − r` does, so `1 − g = H(1 − W)`.
pub fn second_lowest_invert_mixture(g: f64, weights: &[(usize, f64)]) -> Result<f64> {
    Ok(1.0 - order_stat_invert_mixture(1.0 - g.clamp(0.0, 1.0), weights)?)
}
