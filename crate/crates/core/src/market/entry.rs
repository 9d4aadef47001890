//! Selective entry: a firm pays the participation cost only if its cost ratio
//! is below a common threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cost::CostLaw;
use crate::error::{domain, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    Exogenous { r_star: f64 },
    ZeroProfit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryConfig {
    /// Possible numbers of potential entrants; drawn uniformly per auction.
    pub potential_entrants: Vec<usize>,
    /// Participation cost as a fraction of savings.
    pub kappa: f64,
    pub threshold_mode: ThresholdMode,
    /// Monte Carlo draws for the zero-profit solve.
    pub mc_draws: usize,
}

impl Default for EntryConfig {
    fn default() -> Self {
        EntryConfig {
            potential_entrants: vec![13, 14, 15],
            kappa: 0.0,
            threshold_mode: ThresholdMode::ZeroProfit,
            mc_draws: 20_000,
        }
    }
}

impl EntryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.potential_entrants.is_empty() || self.potential_entrants.iter().any(|j| *j < 2) {
            return domain("potential entrants must be at least 2");
        }
        if !(self.kappa >= 0.0) {
            return domain(format!("participation cost must be non-negative, got {}", self.kappa));
        }
        if let ThresholdMode::Exogenous { r_star } = self.threshold_mode {
            if !(r_star > 0.0) {
                return domain("exogenous threshold must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryThreshold {
    pub r_star: f64,
    /// Simulated profit of the marginal type, as a fraction of savings.
    pub marginal_profit: f64,
    pub profit_se: f64,
    /// True when the participation cost exceeds any achievable profit.
    pub no_profitable_entry: bool,
}

/// Expected second-stage profit (fraction of savings) of a firm at cost ratio
/// `r` facing rivals with the given minimum costs.
///
/// The marginal entrant has the highest cost among entrants, so it earns only
/// when no rival enters; it then keeps its first-round margin.
fn marginal_profit(min_rival: &[f64], r: f64, margin: f64) -> (f64, f64) {
    let n = min_rival.len() as f64;
    let p = min_rival.iter().filter(|m| **m > r).count() as f64 / n;
    let rent = margin / (1.0 + margin);
    (p * rent, rent * (p * (1.0 - p) / n).sqrt())
}

/// Entry threshold for `j_tilde` potential entrants.
pub fn entry_threshold(law: &CostLaw, cfg: &EntryConfig, j_tilde: usize, margin: f64, seed: u64) -> Result<EntryThreshold> {
    cfg.validate()?;
    if j_tilde < 2 {
        return domain("need at least two potential entrants");
    }
    if !(margin >= 0.0) {
        return domain("margin must be non-negative");
    }
    if let ThresholdMode::Exogenous { r_star } = cfg.threshold_mode {
        return Ok(EntryThreshold { r_star, marginal_profit: f64::NAN, profit_se: f64::NAN, no_profitable_entry: false });
    }
    // Common random numbers: the same rival draws for every candidate threshold.
    let mut rng = stream(seed, "entry", j_tilde as u64);
    let min_rival: Vec<f64> = (0..cfg.mc_draws.max(1))
        .map(|_| (1..j_tilde).map(|_| law.quantile(rng.random::<f64>())).fold(f64::INFINITY, f64::min))
        .collect();
    let (lo0, hi0) = (law.r_low(), law.r_high());
    let (p_hi, se_hi) = marginal_profit(&min_rival, hi0, margin);
    if p_hi >= cfg.kappa {
        return Ok(EntryThreshold { r_star: hi0, marginal_profit: p_hi, profit_se: se_hi, no_profitable_entry: false });
    }
    let (p_lo, se_lo) = marginal_profit(&min_rival, lo0, margin);
    if p_lo < cfg.kappa {
        return Ok(EntryThreshold { r_star: lo0, marginal_profit: p_lo, profit_se: se_lo, no_profitable_entry: true });
    }
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > 1e-10 * hi0 {
        let mid = 0.5 * (lo + hi);
        if marginal_profit(&min_rival, mid, margin).0 >= cfg.kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (p, se) = marginal_profit(&min_rival, lo, margin);
    Ok(EntryThreshold { r_star: lo, marginal_profit: p, profit_se: se, no_profitable_entry: false })
}
