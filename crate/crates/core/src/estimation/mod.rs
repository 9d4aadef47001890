//! Structural estimation from auction transcripts.

pub mod alpha;
pub mod bequest;
pub mod beta;
pub mod cost;
pub mod deconvolution;
pub mod kde;
pub mod logit;
pub mod order_stat;
pub mod runner_up;
pub mod symmetry;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::AuctionTranscript;
use crate::preferences::{BequestPrefDist, InfoCostTable, RiskPrefGroup};
use crate::valuation::CrraParams;

pub use alpha::{estimate_alpha, AlphaCell};
pub use bequest::{estimate_bequest_dist, gradient_observations, BequestEstimate, BequestOptions, GradientObservation, ZetaEstimate};
pub use beta::{estimate_beta_groups, BetaEstimate, BetaOptions, SecondRoundObservation};
pub use cost::{cost_dist_from_varpi, recover_cost_law, RecoveredCost};
pub use order_stat::{order_stat_invert, second_highest_cdf};
pub use runner_up::{fit_runner_up_models, RunnerUpModel};
pub use symmetry::{symmetry_diagnostic, SymmetryReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    pub crra: CrraParams,
    pub bequest: BequestOptions,
    pub theta_draws: usize,
    pub bootstrap: usize,
    pub intercept_ridge: f64,
    /// Entry threshold per quintile, the upper end of the recovered cost support.
    pub r_star: [f64; 5],
    pub cost_grid: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub quintile: u8,
    pub recovered: RecoveredCost,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySummary {
    pub contract: usize,
    pub firm_ids: Vec<u32>,
    pub ks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResults {
    pub pooled_zeta: ZetaEstimate,
    pub bequest: Vec<BequestEstimate>,
    pub runner_up: Vec<RunnerUpModel>,
    pub runner_up_accuracy: Option<f64>,
    pub alpha: Vec<AlphaCell>,
    pub beta: Vec<BetaEstimate>,
    pub cost: Vec<CostEstimate>,
    pub symmetry: Option<SymmetrySummary>,
}

impl EstimationResults {
    pub fn bequest_dists(&self) -> Vec<BequestPrefDist> {
        self.bequest.iter().map(|b| b.dist.clone()).collect()
    }

    pub fn info_costs(&self) -> Result<InfoCostTable> {
        alpha::alpha_table(&self.alpha)
    }

    /// Group means with the bootstrap variance of the estimate.
    pub fn risk_groups(&self) -> Vec<RiskPrefGroup> {
        self.beta
            .iter()
            .filter(|b| b.identified)
            .map(|b| {
                let half = 0.5 * (b.ci_high - b.ci_low) / 1.959_963_984_540_054;
                RiskPrefGroup { group_key: b.group_key, beta_mean: b.beta, beta_var: half * half }
            })
            .collect()
    }
}

/// Runs every estimator on one set of transcripts. Transcripts are sorted
/// by retiree id first so the input order does not matter.
pub fn estimate_all(transcripts: &[AuctionTranscript], opts: &EstimationOptions) -> Result<EstimationResults> {
    let mut ts = transcripts.to_vec();
    ts.sort_by_key(|t| t.retiree_id);
    let crra = &opts.crra;

    let gradients = gradient_observations(&ts, crra)?;
    let pooled_zeta = bequest::estimate_zeta(&gradients, opts.bequest.zeta_share, opts.bequest.support_gap)?;
    let bequest = (1..=5u8)
        .map(|q| {
            let obs: Vec<GradientObservation> = gradients.iter().copied().filter(|o| o.quintile == q).collect();
            estimate_bequest_dist(&obs, q, &opts.bequest)
        })
        .collect::<Result<Vec<_>>>()?;
    let dists: Vec<BequestPrefDist> = bequest.iter().map(|b| b.dist.clone()).collect();

    let models = fit_runner_up_models(&ts, opts.intercept_ridge)?;
    let runner_up_accuracy = runner_up::prediction_accuracy(&models, &ts);
    let alpha = estimate_alpha(&ts, crra)?;

    let second = beta::second_round_observations(&ts, &models);
    let beta_opts = BetaOptions { theta_draws: opts.theta_draws, bootstrap: opts.bootstrap, seed: opts.seed };
    let beta = estimate_beta_groups(&second, &dists, crra, &beta_opts)?;

    let draws = cost::zero_gap_varpi(&second, &dists, crra, opts.seed)?;
    let mut cost = Vec::new();
    for q in 1..=5u8 {
        let mine: Vec<cost::VarpiDraw> = draws.iter().copied().filter(|d| d.quintile == q).collect();
        let sample = cost_dist_from_varpi(&mine, crra)?;
        let recovered = recover_cost_law(q, &sample.draws, opts.r_star[q as usize - 1], opts.cost_grid)?;
        cost.push(CostEstimate { quintile: q, recovered, rejected: sample.rejected });
    }

    let rows = symmetry::offer_rows(&ts, 0);
    let symmetry = symmetry_diagnostic(&rows, 2).ok().map(|r| SymmetrySummary {
        contract: 0,
        firm_ids: r.firms.iter().map(|f| f.firm_id).collect(),
        ks: r.ks,
    });

    Ok(EstimationResults {
        pooled_zeta,
        bequest,
        runner_up: models.into_values().collect(),
        runner_up_accuracy,
        alpha,
        beta,
        cost,
        symmetry,
    })
}
