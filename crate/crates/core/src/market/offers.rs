//! First-round offer policies.

use serde::{Deserialize, Serialize};

use super::cost::{max_pension, FirmState};
use crate::error::{domain, Result};
use crate::valuation::LifeFactors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OfferPolicy {
    /// `P = P_max / (1 + m)`.
    FixedMargin { margin: f64 },
    /// Margin grows by `shade` per cost rank, cheapest firm first.
    ShadedByRank { margin: f64, shade: f64 },
    /// Offers supplied by the caller.
    Replay,
}

impl Default for OfferPolicy {
    fn default() -> Self {
        OfferPolicy::FixedMargin { margin: 1.0 }
    }
}

impl OfferPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OfferPolicy::FixedMargin { margin } if !(margin >= 0.0) => domain(format!("margin must be >= 0, got {margin}")),
            OfferPolicy::ShadedByRank { margin, shade } if !(margin >= 0.0 && shade >= 0.0) => {
                domain("margin and shade must be >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Margin of the cheapest firm.
    pub fn base_margin(&self) -> f64 {
        match *self {
            OfferPolicy::FixedMargin { margin } | OfferPolicy::ShadedByRank { margin, .. } => margin,
            OfferPolicy::Replay => 0.0,
        }
    }
}

/// Offers indexed `[entrant][contract]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferBook {
    pub offers: Vec<Vec<f64>>,
}

impl OfferBook {
    /// Highest offer for a contract and the entrant making it (lowest index on ties).
    pub fn best(&self, contract: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, row) in self.offers.iter().enumerate() {
            if best.is_none_or(|(_, p)| row[contract] > p) {
                best = Some((j, row[contract]));
            }
        }
        best
    }
}

/// Offers for every entrant and contract.
///
/// `loadings[c]` is a retiree- and contract-specific markup shared by all
/// firms; it shifts the whole offer book for that contract.
pub fn first_round_offers(
    policy: &OfferPolicy,
    entrants: &[FirmState],
    factors: &[LifeFactors],
    savings: f64,
    loadings: &[f64],
    replay: Option<&OfferBook>,
) -> Result<OfferBook> {
    policy.validate()?;
    if loadings.len() != factors.len() {
        return domain("one loading per contract is required");
    }
    if loadings.iter().any(|l| !(*l >= 0.0)) {
        return domain("loadings must be non-negative");
    }
    let cap = |j: usize, c: usize| max_pension(&entrants[j], &factors[c], savings);
    let margins: Vec<f64> = match *policy {
        OfferPolicy::FixedMargin { margin } => vec![margin; entrants.len()],
        OfferPolicy::ShadedByRank { margin, shade } => {
            let mut order: Vec<usize> = (0..entrants.len()).collect();
            order.sort_by(|&a, &b| {
                entrants[a].cost_ratio.total_cmp(&entrants[b].cost_ratio).then(entrants[a].id.cmp(&entrants[b].id))
            });
            let mut m = vec![0.0; entrants.len()];
            for (rank, &j) in order.iter().enumerate() {
                m[j] = margin + shade * rank as f64;
            }
            m
        }
        OfferPolicy::Replay => {
            let book = replay.ok_or_else(|| crate::Error::Config("replay policy needs an offer book".into()))?;
            if book.offers.len() != entrants.len() || book.offers.iter().any(|r| r.len() != factors.len()) {
                return domain("replayed offer book has the wrong shape");
            }
            for (j, row) in book.offers.iter().enumerate() {
                for (c, p) in row.iter().enumerate() {
                    if !(*p > 0.0) || *p > cap(j, c) * (1.0 + 1e-12) {
                        return domain(format!("replayed offer {p} outside (0, P_max] for entrant {j}"));
                    }
                }
            }
            return Ok(book.clone());
        }
    };
    let offers = (0..entrants.len())
        .map(|j| (0..factors.len()).map(|c| cap(j, c) / ((1.0 + margins[j]) * (1.0 + loadings[c]))).collect())
        .collect();
    Ok(OfferBook { offers })
}
