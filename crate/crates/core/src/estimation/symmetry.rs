//! Cross-firm symmetry check on residualized first-round pension rates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kde::{ks_distance, Kde};
use crate::error::{Error, Result};
use crate::lifetables::Gender;
use crate::market::AuctionTranscript;

/// One first-round offer with the retiree observables used as regressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferRow {
    pub firm_id: u32,
    /// Monthly pension per 1,000 of savings.
    pub rate: f64,
    pub unc: f64,
    pub age_years: f64,
    pub female: bool,
    pub married: bool,
    pub savings: f64,
}

impl OfferRow {
    fn regressors(&self) -> [f64; 6] {
        [
            1.0,
            self.unc / 100.0,
            self.age_years - 65.0,
            f64::from(u8::from(self.female)),
            f64::from(u8::from(self.married)),
            self.savings / 1e5,
        ]
    }
}

/// Offers on one contract of the menu.
pub fn offer_rows(transcripts: &[AuctionTranscript], contract: usize) -> Vec<OfferRow> {
    transcripts
        .iter()
        .filter(|t| contract < t.contracts.len())
        .flat_map(|t| {
            t.entrants.iter().zip(&t.offers).map(move |(e, row)| OfferRow {
                firm_id: e.firm_id,
                rate: 1000.0 * row[contract] / t.savings,
                unc: t.factors[contract].unc_i,
                age_years: t.age_months / 12.0,
                female: t.gender == Gender::Female,
                married: t.married,
                savings: t.savings,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmResiduals {
    pub firm_id: u32,
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Kernel density of the residuals on the common grid.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub grid: Vec<f64>,
    pub firms: Vec<FirmResiduals>,
    /// Two-sample KS distances, indexed like `firms`.
    pub ks: Vec<Vec<f64>>,
}

fn least_squares(rows: &[&OfferRow]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = 6;
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i].regressors()[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rate));
    // Drop regressors that never vary for this firm.
    let keep: Vec<usize> = (0..k)
        .filter(|&j| j == 0 || x.column(j).iter().any(|v| (v - x[(0, j)]).abs() > 1e-12))
        .collect();
    let xs = x.select_columns(&keep);
    let xtx = xs.transpose() * &xs;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(format!("{} offers cannot identify {} coefficients", rows.len(), keep.len())))?;
    let b = chol.solve(&(xs.transpose() * &y));
    let resid = (&y - &xs * &b).iter().copied().collect();
    let mut coef = vec![0.0; k];
    for (slot, j) in keep.iter().enumerate() {
        coef[*j] = b[slot];
    }
    Ok((coef, resid))
}

/// Per-firm OLS of pension rates on retiree observables, kernel densities of
/// the residuals and pairwise KS distances between firms.
pub fn symmetry_diagnostic(rows: &[OfferRow], grid_points: usize) -> Result<SymmetryReport> {
    let mut by_firm: BTreeMap<u32, Vec<&OfferRow>> = BTreeMap::new();
    for r in rows {
        by_firm.entry(r.firm_id).or_default().push(r);
    }
    if by_firm.len() < 2 {
        return Err(Error::InsufficientData("symmetry check needs offers from at least two firms".into()));
    }
    let mut fitted = Vec::new();
    for (id, rs) in &by_firm {
        if rs.len() <= 6 {
            return Err(Error::RankDeficient(format!("firm {id} has {} offers", rs.len())));
        }
        let (coef, residuals) = least_squares(rs)?;
        fitted.push((*id, coef, residuals));
    }
    let (lo, hi) = fitted
        .iter()
        .flat_map(|f| f.2.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let n = grid_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let firms: Vec<FirmResiduals> = fitted
        .into_iter()
        .map(|(firm_id, coef, residuals)| {
            let density = match Kde::new(&residuals) {
                Ok(k) => grid.iter().map(|g| k.pdf(*g)).collect(),
                Err(_) => vec![0.0; n],
            };
            FirmResiduals { firm_id, coef, residuals, density }
        })
        .collect();
    let ks = firms.iter().map(|a| firms.iter().map(|b| ks_distance(&a.residuals, &b.residuals)).collect()).collect();
    Ok(SymmetryReport { grid, firms, ks })
}
