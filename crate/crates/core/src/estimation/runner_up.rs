//! Firm-choice logit used to predict the runner-up of each auction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::logit::{fit_conditional_logit, ChoiceSet, LogitFit};
use crate::error::Result;
use crate::market::{AuctionTranscript, StageChoice};
use crate::preferences::Channel;

/// Logit over entrants with firm intercepts, rating and money's worth of
/// the first-round offer on the chosen contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerUpModel {
    pub channel: Channel,
    pub quintile: u8,
    /// Firms with an intercept; the first is the reference with intercept zero.
    pub firms: Vec<u32>,
    pub intercepts: Vec<f64>,
    pub rating_coef: f64,
    pub mwr_coef: f64,
    pub n_choices: usize,
    pub converged: bool,
}

fn mwr(tr: &AuctionTranscript, entrant: usize, contract: usize) -> f64 {
    tr.offers[entrant][contract] * tr.factors[contract].unc_i / tr.savings
}

impl RunnerUpModel {
    pub fn index(&self, tr: &AuctionTranscript, entrant: usize, contract: usize) -> f64 {
        let id = tr.entrants[entrant].firm_id;
        let icpt = self.firms.iter().position(|f| *f == id).map_or(0.0, |k| self.intercepts[k]);
        icpt + self.rating_coef * f64::from(tr.rating(entrant)) + self.mwr_coef * mwr(tr, entrant, contract)
    }

    /// Highest-index entrant other than the winner; ties go to the lowest firm id.
    pub fn predict(&self, tr: &AuctionTranscript) -> Option<usize> {
        let (w, a) = (tr.winner?, tr.chosen_contract?);
        (0..tr.entrants.len())
            .filter(|k| *k != w)
            .map(|k| (k, self.index(tr, k, a)))
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((b, bv)) if bv > v || (bv == v && tr.entrants[b].firm_id < tr.entrants[k].firm_id) => Some((b, bv)),
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
    }
}

fn choice_set(tr: &AuctionTranscript, firms: &[u32]) -> Option<ChoiceSet> {
    let (w, a) = (tr.winner?, tr.chosen_contract?);
    if tr.entrants.len() < 2 {
        return None;
    }
    let alts = (0..tr.entrants.len())
        .map(|k| {
            let mut x = vec![0.0; firms.len() + 1];
            if let Some(p) = firms.iter().position(|f| *f == tr.entrants[k].firm_id) {
                if p > 0 {
                    x[p - 1] = 1.0;
                }
            }
            x[firms.len() - 1] = f64::from(tr.rating(k));
            x[firms.len()] = mwr(tr, k, a);
            x
        })
        .collect();
    Some(ChoiceSet { alts, chosen: w })
}

/// Fits one model per channel and quintile on all auctions with a winner.
/// Intercepts carry a ridge penalty because ratings are fixed per firm.
pub fn fit_runner_up_models(
    transcripts: &[AuctionTranscript],
    intercept_ridge: f64,
) -> Result<BTreeMap<(Channel, u8), RunnerUpModel>> {
    let mut cells: BTreeMap<(Channel, u8), Vec<&AuctionTranscript>> = BTreeMap::new();
    for tr in transcripts.iter().filter(|t| t.winner.is_some() && t.stage != StageChoice::NoOffers) {
        cells.entry((tr.channel, tr.quintile)).or_default().push(tr);
    }
    let mut out = BTreeMap::new();
    for ((channel, quintile), trs) in cells {
        let mut firms: Vec<u32> = trs.iter().flat_map(|t| t.entrants.iter().map(|e| e.firm_id)).collect();
        firms.sort_unstable();
        firms.dedup();
        let sets: Vec<ChoiceSet> = trs.iter().filter_map(|t| choice_set(t, &firms)).collect();
        if sets.is_empty() {
            continue;
        }
        let mut ridge = vec![intercept_ridge; firms.len() + 1];
        ridge[firms.len() - 1] = 1e-8;
        ridge[firms.len()] = 1e-8;
        let fit: LogitFit = fit_conditional_logit(&sets, &ridge)?;
        let mut intercepts = vec![0.0];
        intercepts.extend_from_slice(&fit.coef[..firms.len() - 1]);
        out.insert(
            (channel, quintile),
            RunnerUpModel {
                channel,
                quintile,
                firms: firms.clone(),
                intercepts,
                rating_coef: fit.coef[firms.len() - 1],
                mwr_coef: fit.coef[firms.len()],
                n_choices: sets.len(),
                converged: fit.converged,
            },
        );
    }
    Ok(out)
}

/// Share of bargaining-round auctions whose true runner-up is predicted.
pub fn prediction_accuracy(models: &BTreeMap<(Channel, u8), RunnerUpModel>, transcripts: &[AuctionTranscript]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for tr in transcripts.iter().filter(|t| t.stage == StageChoice::SecondRound) {
        let truth = tr.truth.as_ref().and_then(|t| t.runner_up);
        let model = models.get(&(tr.channel, tr.quintile));
        if let (Some(k), Some(m)) = (truth, model) {
            total += 1;
            hits += usize::from(m.predict(tr) == Some(k));
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}
