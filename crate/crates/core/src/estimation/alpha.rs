//! Information costs from first-round firm choices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::logit::{fit_conditional_logit, ChoiceSet};
use crate::error::Result;
use crate::market::{AuctionTranscript, StageChoice};
use crate::preferences::{Channel, InfoCostTable};
use crate::valuation::{pension_utility, CrraParams};

/// Smallest reported cost when choices are perfectly price-sensitive.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCell {
    pub channel: Channel,
    pub quintile: u8,
    #[serde(with = "crate::serde_nan")]
    pub alpha: f64,
    #[serde(with = "crate::serde_nan")]
    pub se: f64,
    pub n_choices: usize,
    #[serde(with = "crate::serde_nan")]
    pub rating_coef: f64,
    /// Non-positive price coefficient or separated data.
    pub flagged: bool,
}

/// Round-one choices on a contract without bequest exposure, where the
/// utility of each offer is `βZ + ρ(P)` whatever the bequest weight. The
/// price coefficient of the conditional logit is `1/α`.
pub fn alpha_choice_set(tr: &AuctionTranscript, crra: &CrraParams) -> Result<Option<ChoiceSet>> {
    let (Some(w), Some(a)) = (tr.winner, tr.chosen_contract) else { return Ok(None) };
    if tr.stage != StageChoice::FirstRound || tr.factors[a].has_bequest() || tr.entrants.len() < 2 {
        return Ok(None);
    }
    let alts = (0..tr.entrants.len())
        .map(|k| Ok(vec![pension_utility(tr.offers[k][a], &tr.factors[a], crra)?, f64::from(tr.rating(k))]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(ChoiceSet { alts, chosen: w }))
}

pub fn estimate_alpha(transcripts: &[AuctionTranscript], crra: &CrraParams) -> Result<Vec<AlphaCell>> {
    let mut cells: BTreeMap<(Channel, u8), Vec<ChoiceSet>> = BTreeMap::new();
    for tr in transcripts {
        if let Some(s) = alpha_choice_set(tr, crra)? {
            cells.entry((tr.channel, tr.quintile)).or_default().push(s);
        }
    }
    let mut out = Vec::new();
    for ((channel, quintile), sets) in cells {
        let fit = fit_conditional_logit(&sets, &[1e-8, 1e-8])?;
        let c = fit.coef[0];
        let se_c = fit.std_errors()[0];
        let flagged = fit.separated || !(c > 0.0);
        let alpha = if fit.separated && c > 0.0 {
            ALPHA_FLOOR
        } else if c > 0.0 {
            1.0 / c
        } else {
            f64::INFINITY
        };
        out.push(AlphaCell {
            channel,
            quintile,
            alpha,
            se: if c > 0.0 { se_c / (c * c) } else { f64::NAN },
            n_choices: sets.len(),
            rating_coef: fit.coef[1],
            flagged,
        });
    }
    Ok(out)
}

pub fn alpha_table(cells: &[AlphaCell]) -> Result<InfoCostTable> {
    let mut t = InfoCostTable::default();
    for c in cells.iter().filter(|c| c.alpha.is_finite() && c.alpha > 0.0) {
        t.set(c.channel, c.quintile, c.alpha)?;
    }
    Ok(t)
}
