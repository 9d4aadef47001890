//! Market simulation: one independent auction per retiree.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bargaining::{bargain_closed_form, BargainContext, Bidder};
use super::cost::{max_pension, CostLaw, FirmState};
use super::entry::{entry_threshold, EntryConfig, EntryThreshold};
use super::offers::{first_round_offers, OfferPolicy};
use super::transcript::{AuctionTranscript, EntrantRecord, StageChoice, TranscriptTruth, SCHEMA_VERSION};
use super::{FirmSpec, RetireeProfile};
use crate::error::{Error, Result};
use crate::lifetables::GompertzModel;
use crate::preferences::{
    contract_choice, ri_choice_probs, sample_preferences, BequestPrefDist, GroupKey, InfoCostTable, RiskPrefGroup,
};
use crate::rng::stream;
use crate::valuation::{bequest_utility, life_factors, pension_utility, ContractSpec, CrraParams, LifeFactors, Lifetime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractTemplate {
    pub deferral: f64,
    pub guarantee: f64,
}

#[derive(Debug, Clone)]
pub struct MarketConfig {
    pub crra: CrraParams,
    pub mortality: GompertzModel,
    pub contracts: Vec<ContractTemplate>,
    pub temporary_payment_multiple: f64,
    pub firms: Vec<FirmSpec>,
    pub entry: EntryConfig,
    pub offer_policy: OfferPolicy,
    /// Upper bound of the uniform per-contract loading on first-round offers.
    pub contract_loading_max: f64,
    /// Value of the bargaining option above the best first-round utility, in units of α.
    pub eu_kappa: f64,
    /// Bequest laws indexed by quintile − 1.
    pub bequest: Vec<BequestPrefDist>,
    pub risk: BTreeMap<GroupKey, RiskPrefGroup>,
    pub alpha: InfoCostTable,
    /// Cost laws indexed by quintile − 1.
    pub cost_laws: Vec<CostLaw>,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        self.crra.validate()?;
        self.mortality.validate()?;
        self.entry.validate()?;
        self.offer_policy.validate()?;
        if self.contracts.is_empty() {
            return Err(Error::Config("contract menu is empty".into()));
        }
        if self.firms.len() < *self.entry.potential_entrants.iter().max().unwrap_or(&0) {
            return Err(Error::Config("fewer firms than potential entrants".into()));
        }
        if self.bequest.len() != 5 || self.cost_laws.len() != 5 {
            return Err(Error::Config("bequest and cost laws are needed for all five quintiles".into()));
        }
        if !(self.contract_loading_max >= 0.0) {
            return Err(Error::Config("contract loading bound must be non-negative".into()));
        }
        Ok(())
    }

    pub fn contract_specs(&self, married: bool) -> Vec<ContractSpec> {
        self.contracts
            .iter()
            .map(|c| ContractSpec {
                deferral: c.deferral,
                guarantee: c.guarantee,
                spouse_covered: married,
                temporary_payment_multiple: self.temporary_payment_multiple,
            })
            .collect()
    }

    /// Contract menu and life factors for one retiree.
    pub fn retiree_factors(&self, retiree: &RetireeProfile) -> Result<(Vec<ContractSpec>, Vec<LifeFactors>)> {
        let x = &retiree.covariates;
        let own = Lifetime::from_model(&self.mortality, x, x.age_at_retirement);
        let spouse = retiree.spouse.as_ref().map(|s| Lifetime::from_model(&self.mortality, s, s.age_at_retirement));
        let specs = self.contract_specs(x.married);
        let factors = specs
            .iter()
            .map(|c| life_factors(&own, if x.married { spouse.as_ref() } else { None }, c, &self.crra))
            .collect::<Result<Vec<_>>>()?;
        Ok((specs, factors))
    }

    fn risk_group(&self, key: &GroupKey) -> Result<&RiskPrefGroup> {
        self.risk.get(key).ok_or_else(|| Error::Config(format!("no risk preference for group {key}")))
    }

    fn alpha_for(&self, retiree: &RetireeProfile) -> Result<f64> {
        self.alpha
            .get(retiree.channel, retiree.quintile)
            .ok_or_else(|| Error::Config(format!("no information cost for {:?} Q{}", retiree.channel, retiree.quintile)))
    }
}

/// Entry thresholds for every quintile and number of potential entrants.
pub fn entry_thresholds(cfg: &MarketConfig, seed: u64) -> Result<BTreeMap<(u8, usize), EntryThreshold>> {
    let mut out = BTreeMap::new();
    for q in 1..=5u8 {
        for &j in &cfg.entry.potential_entrants {
            let law = &cfg.cost_laws[q as usize - 1];
            let t = entry_threshold(law, &cfg.entry, j, cfg.offer_policy.base_margin(), seed ^ u64::from(q))?;
            out.insert((q, j), t);
        }
    }
    Ok(out)
}

/// Random inputs of one auction.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionDraws {
    pub theta: f64,
    pub beta: f64,
    /// Potential entrants with their cost ratios.
    pub potential: Vec<FirmState>,
    pub loadings: Vec<f64>,
    /// Uniform used for the stage and firm choice.
    pub choice_uniform: f64,
}

pub fn draw_auction<R: Rng + ?Sized>(cfg: &MarketConfig, retiree: &RetireeProfile, rng: &mut R) -> Result<AuctionDraws> {
    let q = retiree.quintile as usize;
    let (theta, beta) = sample_preferences(&cfg.bequest[q - 1], cfg.risk_group(&retiree.group_key())?, rng)?;
    let sizes = &cfg.entry.potential_entrants;
    let j_tilde = sizes[rng.random_range(0..sizes.len())];
    let mut picked: Vec<usize> = sample(rng, cfg.firms.len(), j_tilde).into_vec();
    picked.sort_unstable();
    let law = &cfg.cost_laws[q - 1];
    let potential = picked
        .into_iter()
        .map(|i| FirmState { id: cfg.firms[i].id, rating: cfg.firms[i].rating, cost_ratio: law.quantile(rng.random::<f64>()) })
        .collect();
    let loadings = (0..cfg.contracts.len()).map(|_| cfg.contract_loading_max * rng.random::<f64>()).collect();
    Ok(AuctionDraws { theta, beta, potential, loadings, choice_uniform: rng.random::<f64>() })
}

/// Runs one auction from given draws.
pub fn run_auction(
    cfg: &MarketConfig,
    thresholds: &BTreeMap<(u8, usize), EntryThreshold>,
    retiree: &RetireeProfile,
    specs: &[ContractSpec],
    factors: &[LifeFactors],
    draws: &AuctionDraws,
) -> Result<AuctionTranscript> {
    let x = &retiree.covariates;
    let s = x.savings;
    let j_tilde = draws.potential.len();
    let r_star = thresholds
        .get(&(retiree.quintile, j_tilde))
        .ok_or_else(|| Error::Config(format!("no entry threshold for Q{} with {j_tilde} firms", retiree.quintile)))?
        .r_star;
    let alpha = cfg.alpha_for(retiree)?;
    let entrants: Vec<FirmState> = draws.potential.iter().copied().filter(|f| f.cost_ratio <= r_star).collect();

    let mut t = AuctionTranscript {
        schema_version: SCHEMA_VERSION,
        retiree_id: retiree.id,
        quintile: retiree.quintile,
        channel: retiree.channel,
        group_key: retiree.group_key(),
        gender: x.gender,
        age_months: x.age_at_retirement,
        married: x.married,
        savings: s,
        potential_entrants: j_tilde,
        contracts: specs.to_vec(),
        factors: factors.to_vec(),
        entrants: entrants
            .iter()
            .map(|f| EntrantRecord { firm_id: f.id, rating: f.rating, cost_ratio: Some(f.cost_ratio) })
            .collect(),
        offers: Vec::new(),
        stage: StageChoice::NoOffers,
        chosen_contract: None,
        winner: None,
        final_pension: None,
        truth: Some(TranscriptTruth {
            theta: draws.theta,
            beta: draws.beta,
            alpha,
            r_star,
            runner_up: None,
            realized_utility: None,
            p_second_round: None,
            floor_binding: false,
        }),
    };
    if entrants.is_empty() {
        return Ok(t);
    }

    let book = first_round_offers(&cfg.offer_policy, &entrants, factors, s, &draws.loadings, None)?;
    let crra = &cfg.crra;
    let menu = (0..specs.len())
        .map(|c| {
            let (_, p) = book.best(c).expect("entrants present");
            Ok((pension_utility(p, &factors[c], crra)?, bequest_utility(p, &factors[c], crra)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let a = contract_choice(draws.theta, &menu)?;
    let ctx = BargainContext { theta: draws.theta, beta: draws.beta, factors: &factors[a], crra };

    let utilities: Vec<f64> = entrants.iter().zip(&book.offers).map(|(f, row)| ctx.value(f.rating, row[a])).collect();
    let best = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let priors = vec![1.0 / entrants.len() as f64; entrants.len()];
    let probs = ri_choice_probs(&utilities, best + cfg.eu_kappa * alpha, &priors, alpha)?;
    let mut pick = probs.len() - 1;
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if draws.choice_uniform < acc {
            pick = k;
            break;
        }
    }

    let truth = t.truth.as_mut().expect("set above");
    truth.p_second_round = Some(probs[probs.len() - 1]);
    t.chosen_contract = Some(a);
    if pick < entrants.len() {
        t.stage = StageChoice::FirstRound;
        t.winner = Some(pick);
        t.final_pension = Some(book.offers[pick][a]);
        truth.realized_utility = Some(utilities[pick]);
    } else {
        let bidders: Vec<Bidder> = entrants
            .iter()
            .zip(&book.offers)
            .map(|(f, row)| Bidder { id: f.id, rating: f.rating, p_max: max_pension(f, &factors[a], s), floor: row[a] })
            .collect();
        let out = bargain_closed_form(&bidders, &ctx)?;
        t.stage = StageChoice::SecondRound;
        t.winner = Some(out.winner);
        t.final_pension = Some(out.pension);
        truth.runner_up = out.runner_up;
        truth.floor_binding = out.floor_binding;
        truth.realized_utility = Some(ctx.value(entrants[out.winner].rating, out.pension));
    }
    t.offers = book.offers;
    Ok(t)
}

/// One auction per retiree, each on its own random stream.
pub fn simulate_market(population: &[RetireeProfile], cfg: &MarketConfig, seed: u64) -> Result<Vec<AuctionTranscript>> {
    cfg.validate()?;
    let thresholds = entry_thresholds(cfg, seed)?;
    population
        .par_iter()
        .map(|r| {
            let (specs, factors) = cfg.retiree_factors(r)?;
            let mut rng = stream(seed, "simulate", r.id);
            let draws = draw_auction(cfg, r, &mut rng)?;
            run_auction(cfg, &thresholds, r, &specs, &factors, &draws)
        })
        .collect()
}
