//! Cost-ratio law from runner-up values.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beta::SecondRoundObservation;
use super::deconvolution::{deconvolve, Deconvolved, NoiseLaw};
use super::kde::Kde;
use super::order_stat::second_lowest_invert_mixture;
use crate::error::{Error, Result};
use crate::market::CostLaw;
use crate::preferences::BequestPrefDist;
use crate::rng::stream;
use crate::valuation::{bequest_utility, invert_pension, pension_utility, CrraParams, LifeFactors};

/// A runner-up value with what is needed to map it back to a cost ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarpiDraw {
    pub quintile: u8,
    pub entrants: usize,
    pub varpi: f64,
    pub theta: f64,
    pub factors: LifeFactors,
    pub savings: f64,
}

/// Runner-up values on the equal-rating subsample, where the winner's
/// realized utility equals the runner-up's break-even utility. One bequest
/// weight is drawn per retiree from the estimated law.
pub fn zero_gap_varpi(
    obs: &[SecondRoundObservation],
    bequest: &[BequestPrefDist],
    crra: &CrraParams,
    seed: u64,
) -> Result<Vec<VarpiDraw>> {
    obs.iter()
        .filter(|o| !o.floor_binding && o.entrants >= 2 && o.delta_z() == 0.0)
        .map(|o| {
            let q = o.group_key.quintile;
            let mut rng = stream(seed, "varpi-theta", o.retiree_id);
            let theta = bequest[q as usize - 1].draw_from_uniform(rng.random());
            let varpi = pension_utility(o.pension, &o.factors, crra)? + theta * bequest_utility(o.pension, &o.factors, crra)?;
            Ok(VarpiDraw { quintile: q, entrants: o.entrants, varpi, theta, factors: o.factors, savings: o.savings })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    /// `(entrants, r)` pairs.
    pub draws: Vec<(usize, f64)>,
    /// Non-negative values that admit no pension.
    pub rejected: usize,
}

/// Maps each value to the break-even pension and then to `r = S/(P·UNC)`.
pub fn cost_dist_from_varpi(draws: &[VarpiDraw], crra: &CrraParams) -> Result<CostSample> {
    let mut out = CostSample { draws: Vec::with_capacity(draws.len()), rejected: 0 };
    for d in draws {
        if !(d.varpi < 0.0) {
            out.rejected += 1;
            continue;
        }
        let p = invert_pension(d.varpi, d.theta, &d.factors, crra)?;
        out.draws.push((d.entrants, d.savings / (p * d.factors.unc_i)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredCost {
    pub law: CostLaw,
    pub n: usize,
    pub bandwidth: f64,
    /// Share of observations by number of entrants.
    pub entrant_weights: Vec<(usize, f64)>,
}

/// Smooths the runner-up cost sample and inverts the second-lowest order
/// statistic, mixing over the observed number of entrants. The result is
/// the law of entrants' costs on `[lowest support point, r_star]`.
pub fn recover_cost_law(quintile: u8, sample: &[(usize, f64)], r_star: f64, grid_points: usize) -> Result<RecoveredCost> {
    let sample: Vec<(usize, f64)> = sample.iter().copied().filter(|(j, r)| *j >= 2 && r.is_finite()).collect();
    if sample.len() < 10 {
        return Err(Error::InsufficientData(format!("Q{quintile}: {} runner-up costs", sample.len())));
    }
    let rs: Vec<f64> = sample.iter().map(|s| s.1).collect();
    let kde = Kde::new(&rs)?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (j, _) in &sample {
        *counts.entry(*j).or_default() += 1;
    }
    let n = sample.len() as f64;
    let weights: Vec<(usize, f64)> = counts.into_iter().map(|(j, c)| (j, c as f64 / n)).collect();

    let min_r = rs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = (min_r - 4.0 * kde.bandwidth).max(1e-6);
    if !(lo < r_star) {
        return Err(Error::Domain(format!("entry threshold {r_star} below the cost sample")));
    }
    let m = grid_points.max(2);
    let grid: Vec<f64> = (0..m).map(|i| lo + (r_star - lo) * i as f64 / (m - 1) as f64).collect();
    let top = kde.cdf(r_star);
    let mut cdf = grid
        .iter()
        .map(|t| second_lowest_invert_mixture((kde.cdf(*t) / top).min(1.0), &weights))
        .collect::<Result<Vec<f64>>>()?;
    cdf[0] = 0.0;
    cdf[m - 1] = 1.0;
    for i in 1..m {
        cdf[i] = cdf[i].clamp(cdf[i - 1], 1.0);
    }
    Ok(RecoveredCost { law: CostLaw::new(quintile, grid, cdf)?, n: sample.len(), bandwidth: kde.bandwidth, entrant_weights: weights })
}

/// Law of the runner-up value in one group by removing the rating-gap
/// term `β·ΔZ` from realized utilities.
pub fn deconvolve_group(utilities: &[f64], delta_z: &[f64], beta: f64, grid_points: usize) -> Result<Deconvolved> {
    if utilities.len() != delta_z.len() {
        return Err(Error::Domain("utilities and rating gaps differ in length".into()));
    }
    let mut atoms: BTreeMap<i64, usize> = BTreeMap::new();
    for dz in delta_z {
        *atoms.entry(dz.round() as i64).or_default() += 1;
    }
    let n = delta_z.len() as f64;
    let noise = NoiseLaw::Discrete { atoms: atoms.into_iter().map(|(z, c)| (beta * z as f64, c as f64 / n)).collect() };
    deconvolve(utilities, &noise, grid_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::order_stat::second_highest_cdf;
    use crate::valuation::total_utility;

    #[test]
    fn single_atom_maps_to_a_point() {
        let crra = CrraParams::from_annual_return(3.0, 0.03);
        let f = LifeFactors::from_parts(150.0, 0.0, 6.0, 0.0, 2.0);
        let (p0, theta, s) = (420.0, 2.0, 80_000.0);
        let varpi = total_utility(p0, theta, &f, &crra).unwrap();
        let d = VarpiDraw { quintile: 3, entrants: 5, varpi, theta, factors: f, savings: s };
        let out = cost_dist_from_varpi(&[d, VarpiDraw { varpi: 0.0, ..d }], &crra).unwrap();
        assert_eq!(out.rejected, 1);
        assert!((out.draws[0].1 - s / (p0 * f.unc_i)).abs() < 1e-9);
    }

    #[test]
    fn recovers_a_uniform_parent_from_second_lowest_draws() {
        let mut rng = stream(4, "cost-test", 0);
        let sample: Vec<(usize, f64)> = (0..20_000)
            .map(|i| {
                let j = 10 + i % 3;
                let mut v: Vec<f64> = (0..j).map(|_| 1.0 + 2.0 * rng.random::<f64>()).collect();
                v.sort_by(f64::total_cmp);
                (j, v[1])
            })
            .collect();
        let rec = recover_cost_law(1, &sample, 3.0, 200).unwrap();
        for t in [1.1, 1.3, 1.6, 2.0] {
            assert!((rec.law.cdf(t) - (t - 1.0) / 2.0).abs() < 0.05, "t={t}: {}", rec.law.cdf(t));
        }
        // The order-statistic map is consistent with the weights used.
        let g = 1.0 - second_highest_cdf(1.0 - 0.2, 11);
        assert!(g > 0.2);
    }

    #[test]
    fn zero_gap_deconvolution_is_identity() {
        let u = [-3.0, -2.0, -1.5];
        let d = deconvolve_group(&u, &[0.0, 0.0, 0.0], 0.7, 5).unwrap();
        assert_eq!(d.grid, vec![-3.0, -2.625, -2.25, -1.875, -1.5]);
        assert_eq!(d.cdf, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }
}
