//! Rating preferences from bargaining outcomes.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runner_up::RunnerUpModel;
use crate::error::Result;
use crate::market::{AuctionTranscript, StageChoice};
use crate::preferences::{BequestPrefDist, Channel, GroupKey};
use crate::rng::stream;
use crate::valuation::{bequest_utility, pension_utility, CrraParams, LifeFactors};

/// One bargaining outcome usable for the rating regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondRoundObservation {
    pub retiree_id: u64,
    pub group_key: GroupKey,
    pub winner_rating: u8,
    pub runner_up_rating: u8,
    pub pension: f64,
    pub factors: LifeFactors,
    pub savings: f64,
    pub entrants: usize,
    /// Pension equals the winner's own first-round offer.
    pub floor_binding: bool,
}

impl SecondRoundObservation {
    pub fn delta_z(&self) -> f64 {
        f64::from(self.runner_up_rating) - f64::from(self.winner_rating)
    }
}

/// Bargaining outcomes with the runner-up predicted by the firm-choice model.
pub fn second_round_observations(
    transcripts: &[AuctionTranscript],
    models: &BTreeMap<(Channel, u8), RunnerUpModel>,
) -> Vec<SecondRoundObservation> {
    transcripts
        .iter()
        .filter(|t| t.stage == StageChoice::SecondRound)
        .filter_map(|t| {
            let (w, a, p) = (t.winner?, t.chosen_contract?, t.final_pension?);
            let floor = t.offers[w][a];
            let floor_binding = (p - floor).abs() <= 1e-9 * p.abs();
            let k = if t.entrants.len() >= 2 { models.get(&(t.channel, t.quintile))?.predict(t)? } else { w };
            Some(SecondRoundObservation {
                retiree_id: t.retiree_id,
                group_key: t.group_key,
                winner_rating: t.rating(w),
                runner_up_rating: t.rating(k),
                pension: p,
                factors: t.factors[a],
                savings: t.savings,
                entrants: t.entrants.len(),
                floor_binding: floor_binding || t.entrants.len() < 2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub group_key: GroupKey,
    #[serde(with = "crate::serde_nan")]
    pub beta: f64,
    #[serde(with = "crate::serde_nan")]
    pub ci_low: f64,
    #[serde(with = "crate::serde_nan")]
    pub ci_high: f64,
    pub n: usize,
    pub n_floor_excluded: usize,
    /// False when the rating gap never varies within the group.
    pub identified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOptions {
    pub theta_draws: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

/// Mean of `L` bequest weights drawn for one retiree.
fn mean_theta(dist: &BequestPrefDist, retiree: u64, draws: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, "theta-draws", retiree);
    (0..draws).map(|_| dist.draw_from_uniform(rng.random())).sum::<f64>() / draws.max(1) as f64
}

/// Through-origin slope of the outcome on the rating gap.
fn slope_through_origin(points: &[(f64, f64)]) -> Option<f64> {
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let var = sxx / n - mean * mean;
    (var > 1e-12).then(|| sxy / sxx)
}

/// Regresses realized utility `ρ(P̃) + θ·b(P̃)` on the rating gap through
/// the origin, averaging over simulated bequest weights; the average of the
/// per-draw slopes equals the slope on the per-retiree mean outcome. Bargains settled at
/// the winner's own offer carry no runner-up information and are dropped.
pub fn estimate_beta_groups(
    obs: &[SecondRoundObservation],
    bequest: &[BequestPrefDist],
    crra: &CrraParams,
    opts: &BetaOptions,
) -> Result<Vec<BetaEstimate>> {
    let mut groups: BTreeMap<GroupKey, Vec<&SecondRoundObservation>> = BTreeMap::new();
    for o in obs {
        groups.entry(o.group_key).or_default().push(o);
    }
    let rows: Vec<(GroupKey, usize, Vec<(f64, f64)>)> = groups
        .iter()
        .map(|(key, members)| {
            let dist = &bequest[key.quintile as usize - 1];
            let used: Vec<&&SecondRoundObservation> = members.iter().filter(|o| !o.floor_binding).collect();
            let pts = used
                .par_iter()
                .map(|o| {
                    let theta = mean_theta(dist, o.retiree_id, opts.theta_draws, opts.seed);
                    let y = pension_utility(o.pension, &o.factors, crra)? + theta * bequest_utility(o.pension, &o.factors, crra)?;
                    Ok((o.delta_z(), y))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((*key, members.len() - used.len(), pts))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(gi, (key, excluded, pts))| {
            let slope = if pts.len() >= 2 { slope_through_origin(&pts) } else { None };
            let Some(beta) = slope else {
                return BetaEstimate {
                    group_key: key,
                    beta: f64::NAN,
                    ci_low: f64::NAN,
                    ci_high: f64::NAN,
                    n: pts.len(),
                    n_floor_excluded: excluded,
                    identified: false,
                };
            };
            let mut rng = stream(opts.seed, "bootstrap", gi as u64);
            let mut boot: Vec<f64> = (0..opts.bootstrap)
                .filter_map(|_| {
                    let sample: Vec<(f64, f64)> = (0..pts.len()).map(|_| pts[rng.random_range(0..pts.len())]).collect();
                    slope_through_origin(&sample)
                })
                .collect();
            boot.sort_by(f64::total_cmp);
            let q = |p: f64| boot[((p * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
            let (ci_low, ci_high) = if boot.is_empty() { (f64::NAN, f64::NAN) } else { (q(0.025), q(0.975)) };
            BetaEstimate { group_key: key, beta, ci_low, ci_high, n: pts.len(), n_floor_excluded: excluded, identified: true }
        })
        .collect())
}
