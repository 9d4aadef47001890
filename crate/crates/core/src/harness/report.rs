//! Estimates against the synthetic truth, plus counterfactual checks.

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::pipeline::{observed_thresholds, CounterfactualSummary};
use super::synth::utility_scales;
use crate::error::Result;
use crate::estimation::EstimationResults;
use crate::lifetables::Gender;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub group: String,
    pub truth: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
    pub sign_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub zeta_hat: f64,
    pub zeta_se: f64,
    pub zeta_true: f64,
    /// Sup-norm CDF error of the recovered cost law per quintile.
    pub cost_sup_error: Vec<f64>,
    pub beta: Vec<BetaRow>,
    /// `α̂ / α` per estimated cell.
    pub alpha_ratios: Vec<f64>,
    pub runner_up_accuracy: Option<f64>,
    pub identification: Vec<Check>,
    pub counterfactual: Vec<Check>,
}

impl RunReport {
    pub fn identification_pass(&self) -> bool {
        self.identification.iter().all(|c| c.pass)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn build_report(cfg: &ScenarioConfig, est: &EstimationResults, cf: &CounterfactualSummary) -> Result<RunReport> {
    let scales = utility_scales(cfg)?;
    let r_star = observed_thresholds(cfg)?;

    let truth_laws = cfg.cost_laws()?;
    let mut cost_sup_error = Vec::new();
    for c in &est.cost {
        let qi = c.quintile as usize - 1;
        let truth = truth_laws[qi].truncated(r_star[qi])?;
        cost_sup_error.push(truth.sup_distance(&c.recovered.law, cfg.costs.r_low, r_star[qi]));
    }

    let risk = cfg.risk_groups(&scales);
    let mut beta = Vec::new();
    for b in est.beta.iter().filter(|b| b.identified) {
        let truth = risk[&b.group_key].beta_mean;
        beta.push(BetaRow {
            group: b.group_key.to_string(),
            truth,
            estimate: b.beta,
            ci_low: b.ci_low,
            ci_high: b.ci_high,
            covered: b.ci_low <= truth && truth <= b.ci_high,
            sign_ok: !(truth > 0.0) || b.beta > 0.0,
        });
    }
    let both = beta.iter().filter(|r| r.covered && r.sign_ok).count() as f64 / beta.len().max(1) as f64;
    // Ordering on the common utility scale: positive-β groups above zero-β
    // groups, and men above women where β is positive.
    let scaled = |pred: &dyn Fn(&crate::estimation::BetaEstimate) -> bool| {
        let v: Vec<f64> = est
            .beta
            .iter()
            .filter(|b| b.identified && pred(b))
            .map(|b| b.beta / scales[b.group_key.quintile as usize - 1])
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let positive = |b: &crate::estimation::BetaEstimate| risk[&b.group_key].beta_mean > 0.0;
    let hi = scaled(&positive);
    let lo = scaled(&|b| !positive(b));
    let men = scaled(&|b| positive(b) && b.group_key.gender == Gender::Male);
    let women = scaled(&|b| positive(b) && b.group_key.gender == Gender::Female);
    let ordering_ok = hi > lo && men > women;

    let alpha_truth = cfg.info_costs(&scales)?;
    let alpha_ratios: Vec<f64> = est
        .alpha
        .iter()
        .filter(|a| a.alpha.is_finite())
        .filter_map(|a| alpha_truth.get(a.channel, a.quintile).map(|t| a.alpha / t))
        .collect();
    let alpha_median = median(alpha_ratios.clone());

    let zeta_err = (est.pooled_zeta.zeta - cfg.preferences.zeta).abs();
    let identification = vec![
        Check::at_most("zeta_abs_error", zeta_err, 0.03),
        Check::at_most("cost_cdf_sup_error", cost_sup_error.iter().cloned().fold(0.0, f64::max), 0.05),
        Check::at_least("beta_sign_and_coverage_share", both, 0.85),
        Check { name: "beta_ordering".into(), value: hi - lo, threshold: 0.0, pass: ordering_ok },
        Check::at_most("alpha_median_ratio_abs_error", (alpha_median - 1.0).abs(), 0.15),
    ];

    let d = &cf.dominance;
    let share = |k: u64| k as f64 / d.draws.max(1) as f64;
    let increasing = |k: usize| cf.mean_pension_by_bidders.windows(2).all(|w| w[1].1[k] >= w[0].1[k]);
    let pension_gap = (cf.mean_pension[2] - cf.mean_pension[0]) / cf.mean_pension[0];
    let utility_gap = ((cf.mean_utility[2] - cf.mean_utility[0]) / cf.mean_utility[0]).abs();
    let counterfactual = vec![
        Check::at_least("full_info_ge_english_share", share(d.full_info_ge_english), 1.0),
        Check::at_least("english_ge_current_share", share(d.english_ge_current), 1.0),
        Check::at_least("full_info_ge_current_share", share(d.full_info_ge_current), 1.0),
        Check { name: "mean_pension_increasing_current".into(), value: 0.0, threshold: 0.0, pass: increasing(0) },
        Check { name: "mean_pension_increasing_english".into(), value: 0.0, threshold: 0.0, pass: increasing(1) },
        Check { name: "mean_pension_increasing_full_info".into(), value: 0.0, threshold: 0.0, pass: increasing(2) },
        Check::at_most("utility_gap_over_pension_gap", utility_gap / pension_gap, 0.1),
    ];

    Ok(RunReport {
        zeta_hat: est.pooled_zeta.zeta,
        zeta_se: est.pooled_zeta.se,
        zeta_true: cfg.preferences.zeta,
        cost_sup_error,
        beta,
        alpha_ratios,
        runner_up_accuracy: est.runner_up_accuracy,
        identification,
        counterfactual,
    })
}
