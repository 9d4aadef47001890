//! Private annuitization costs.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::valuation::LifeFactors;

pub const DEFAULT_R_LOW: f64 = 0.5;
pub const DEFAULT_R_HIGH: f64 = 6.5;

/// Shape of the Beta(1, b) tail above `r = 1`.
const TAIL_SHAPE: f64 = 1.94;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmState {
    pub id: u32,
    /// Risk rating in {1, 2, 3}; higher is better.
    pub rating: u8,
    /// `UNC_j / UNC_i` for the current retiree.
    pub cost_ratio: f64,
}

/// Break-even pension: `S / (r · UNC_i)`.
pub fn max_pension(firm: &FirmState, f: &LifeFactors, savings: f64) -> f64 {
    savings / (firm.cost_ratio * f.unc_i)
}

/// Distribution of the cost ratio for one savings quintile, tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLaw {
    pub quintile: u8,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl CostLaw {
    pub fn new(quintile: u8, grid: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != cdf.len() {
            return domain("cost law grid and CDF must have equal length >= 2");
        }
        if !(grid[0] > 0.0) {
            return domain("cost ratios must be positive");
        }
        if grid.windows(2).any(|w| w[1] < w[0]) || cdf.windows(2).any(|w| w[1] < w[0]) {
            return domain("cost law grid and CDF must be non-decreasing");
        }
        if cdf[0] != 0.0 || (cdf[cdf.len() - 1] - 1.0).abs() > 1e-9 {
            return domain("cost law CDF must run from 0 to 1");
        }
        Ok(CostLaw { quintile, grid, cdf })
    }

    /// Uniform up to `r = 1` with mass `p_below_one`, then a Beta(1, 1.94)
    /// tail over `(1, r_high]`.
    pub fn calibrated(quintile: u8, p_below_one: f64, r_low: f64, r_high: f64, n: usize) -> Result<Self> {
        if !(r_low < 1.0 && r_high > 1.0 && (0.0..1.0).contains(&p_below_one)) {
            return domain("calibrated cost law needs r_low < 1 < r_high and p in [0, 1)");
        }
        // Put the kink at r = 1 on the grid.
        let n_low = (((1.0 - r_low) / (r_high - r_low)) * (n - 1) as f64).round().max(1.0) as usize;
        let n_high = (n - 1 - n_low).max(1);
        let grid: Vec<f64> = (0..=n_low)
            .map(|i| r_low + (1.0 - r_low) * i as f64 / n_low as f64)
            .chain((1..=n_high).map(|i| 1.0 + (r_high - 1.0) * i as f64 / n_high as f64))
            .collect();
        let cdf = grid
            .iter()
            .map(|&r| {
                if r <= 1.0 {
                    p_below_one * (r - r_low) / (1.0 - r_low)
                } else {
                    let x = ((r - 1.0) / (r_high - 1.0)).min(1.0);
                    p_below_one + (1.0 - p_below_one) * (1.0 - (1.0 - x).powf(TAIL_SHAPE))
                }
            })
            .collect();
        CostLaw::new(quintile, grid, cdf)
    }

    /// Default law for a quintile: 6% below one for Q1–Q3, 14% for Q4–Q5.
    pub fn default_for_quintile(quintile: u8) -> Self {
        let p = if quintile >= 4 { 0.14 } else { 0.06 };
        CostLaw::calibrated(quintile, p, DEFAULT_R_LOW, DEFAULT_R_HIGH, 2001).expect("valid defaults")
    }

    pub fn point_mass(quintile: u8, r: f64) -> Result<Self> {
        CostLaw::new(quintile, vec![r, r], vec![0.0, 1.0])
    }

    pub fn r_low(&self) -> f64 {
        self.grid[0]
    }

    pub fn r_high(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn cdf(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r < g[0] {
            return 0.0;
        }
        if r >= self.r_high() {
            return 1.0;
        }
        let i = g.partition_point(|x| *x <= r);
        let (x0, x1) = (g[i - 1], g[i]);
        let (y0, y1) = (self.cdf[i - 1], self.cdf[i]);
        if x1 > x0 {
            y0 + (y1 - y0) * (r - x0) / (x1 - x0)
        } else {
            y1
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let c = &self.cdf;
        let u = u.clamp(0.0, 1.0);
        let i = c.partition_point(|y| *y < u).clamp(1, c.len() - 1);
        let (y0, y1) = (c[i - 1], c[i]);
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        if y1 > y0 {
            x0 + (x1 - x0) * (u - y0) / (y1 - y0)
        } else {
            x0
        }
    }

    /// Law conditional on `r <= r_star`.
    pub fn truncated(&self, r_star: f64) -> Result<CostLaw> {
        let mass = self.cdf(r_star);
        if !(mass > 0.0) {
            return domain(format!("no mass below {r_star}"));
        }
        let mut grid: Vec<f64> = self.grid.iter().copied().filter(|r| *r < r_star).collect();
        grid.push(r_star);
        let cdf = grid.iter().map(|r| (self.cdf(*r) / mass).min(1.0)).collect();
        CostLaw::new(self.quintile, grid, cdf)
    }

    /// Largest absolute CDF difference on the union of both grids within `[lo, hi]`.
    pub fn sup_distance(&self, other: &CostLaw, lo: f64, hi: f64) -> f64 {
        self.grid
            .iter()
            .chain(other.grid.iter())
            .copied()
            .filter(|r| *r >= lo && *r <= hi)
            .chain([lo, hi])
            .map(|r| (self.cdf(r) - other.cdf(r)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_profit_identity() {
        let f = LifeFactors::from_parts(160.0, 0.0, 8.0, 20.0, 2.0);
        let firm = FirmState { id: 0, rating: 2, cost_ratio: 1.37 };
        let s = 80_000.0;
        let p = max_pension(&firm, &f, s);
        assert!((p * firm.cost_ratio * f.unc_i - s).abs() <= 1e-12 * s);
        let fair = max_pension(&FirmState { cost_ratio: 1.0, ..firm }, &f, s);
        assert!((fair - s / f.unc_i).abs() < 1e-12);
        let double = max_pension(&FirmState { cost_ratio: 2.74, ..firm }, &f, s);
        assert!((double - p / 2.0).abs() < 1e-9);
    }

    #[test]
    fn calibrated_mass_below_one() {
        assert!((CostLaw::default_for_quintile(1).cdf(1.0) - 0.06).abs() < 1e-12);
        assert!((CostLaw::default_for_quintile(5).cdf(1.0) - 0.14).abs() < 1e-12);
        let law = CostLaw::default_for_quintile(3);
        assert_eq!(law.cdf(0.4), 0.0);
        assert_eq!(law.cdf(7.0), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let law = CostLaw::default_for_quintile(4);
        for u in [0.01, 0.1, 0.5, 0.9, 0.999] {
            assert!((law.cdf(law.quantile(u)) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn point_mass_law() {
        let law = CostLaw::point_mass(1, 1.0).unwrap();
        assert_eq!(law.quantile(0.3), 1.0);
        assert_eq!(law.cdf(0.999), 0.0);
        assert_eq!(law.cdf(1.0), 1.0);
    }

    #[test]
    fn truncation_renormalizes() {
        let law = CostLaw::default_for_quintile(1);
        let t = law.truncated(3.0).unwrap();
        assert!((t.cdf(3.0) - 1.0).abs() < 1e-12);
        assert!((t.cdf(1.0) - 0.06 / law.cdf(3.0)).abs() < 1e-9);
    }
}
