//! Scenario configuration (TOML) and its translation into model primitives.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lifetables::{GompertzModel, N_COEFFS};
use crate::market::cost::CostLaw;
use crate::market::entry::{EntryConfig, ThresholdMode};
use crate::market::offers::OfferPolicy;
use crate::market::simulate::ContractTemplate;
use crate::lifetables::Gender;
use crate::preferences::{BequestPrefDist, Channel, GroupKey, InfoCostTable, RiskPrefGroup, REFERENCE_THETA_MEANS};
use crate::valuation::CrraParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SavingsConfig {
    pub median: f64,
    pub mean: f64,
    pub minimum: f64,
    /// Four increasing cutpoints; derived from the savings law when absent.
    pub quintile_cutpoints: Option<Vec<f64>>,
}

impl Default for SavingsConfig {
    fn default() -> Self {
        SavingsConfig { median: 74_515.0, mean: 112_471.0, minimum: 10_000.0, quintile_cutpoints: None }
    }
}

impl SavingsConfig {
    /// Log-normal location and scale matching the median and mean.
    pub fn lognormal(&self) -> Result<(f64, f64)> {
        if !(self.median > 0.0 && self.mean > self.median) {
            return Err(Error::Config("savings mean must exceed a positive median".into()));
        }
        Ok((self.median.ln(), (2.0 * (self.mean / self.median).ln()).sqrt()))
    }

    pub fn cutpoints(&self) -> Result<Vec<f64>> {
        let cuts = match &self.quintile_cutpoints {
            Some(c) => c.clone(),
            None => {
                let (mu, sigma) = self.lognormal()?;
                let n = Normal::standard();
                [0.2, 0.4, 0.6, 0.8].iter().map(|p| (mu + sigma * n.inverse_cdf(*p)).exp()).collect()
            }
        };
        if cuts.len() != 4 || cuts.windows(2).any(|w| !(w[1] > w[0])) || !(cuts[0] > 0.0) {
            return Err(Error::Config("quintile cutpoints must be four increasing positive values".into()));
        }
        Ok(cuts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicsConfig {
    pub female_share: f64,
    pub married_share_male: f64,
    pub married_share_female: f64,
    /// Shares retiring before and after the statutory age.
    pub before_share: f64,
    pub after_share: f64,
    /// Husband's age minus wife's age, years.
    pub spouse_age_gap_years: f64,
    pub spouse_age_gap_sd: f64,
    pub retirement_years: [i32; 2],
    /// AFP, sales agent, advisor.
    pub channel_shares: [f64; 3],
}

impl Default for DemographicsConfig {
    fn default() -> Self {
        DemographicsConfig {
            female_share: 0.45,
            married_share_male: 0.75,
            married_share_female: 0.45,
            before_share: 0.2,
            after_share: 0.25,
            spouse_age_gap_years: 3.0,
            spouse_age_gap_sd: 3.0,
            retirement_years: [2004, 2018],
            channel_shares: [0.3, 0.45, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortalityConfig {
    pub g: f64,
    pub tau: [f64; N_COEFFS],
    pub records: usize,
    pub censoring: f64,
}

impl Default for MortalityConfig {
    fn default() -> Self {
        MortalityConfig { g: 0.0085, tau: [-13.78, -1.0, -0.1, -0.3, -0.01], records: 50_000, censoring: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuationConfig {
    pub gamma: f64,
    pub annual_return: f64,
    pub temporary_payment_multiple: f64,
    pub contracts: Vec<ContractTemplate>,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            gamma: 3.0,
            annual_return: 0.03,
            temporary_payment_multiple: 2.0,
            contracts: vec![
                ContractTemplate { deferral: 36.0, guarantee: 0.0 },
                ContractTemplate { deferral: 24.0, guarantee: 120.0 },
                ContractTemplate { deferral: 36.0, guarantee: 240.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmsConfig {
    pub count: u32,
    /// Probabilities of ratings 1, 2, 3.
    pub rating_probs: [f64; 3],
}

impl Default for FirmsConfig {
    fn default() -> Self {
        FirmsConfig { count: 15, rating_probs: [0.15, 0.7, 0.15] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffersConfig {
    pub policy: OfferPolicy,
    pub contract_loading_max: f64,
}

impl Default for OffersConfig {
    fn default() -> Self {
        OffersConfig { policy: OfferPolicy::default(), contract_loading_max: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferencesConfig {
    pub zeta: f64,
    pub theta_means: [f64; 5],
    pub theta_max: f64,
    pub theta_grid: usize,
    /// Mean β in the two lowest quintiles, in units of the quintile's utility scale.
    pub beta_low_quintiles: f64,
    /// Multiplier on β for men relative to women.
    pub beta_male_premium: f64,
    /// Standard deviation of β relative to its scale.
    pub beta_sd_ratio: f64,
    /// α at the reference cell, in units of the quintile's utility scale.
    pub alpha_scale: f64,
    pub eu_kappa: f64,
}

impl Default for PreferencesConfig {
    fn default() -> Self {
        PreferencesConfig {
            zeta: 0.4,
            theta_means: REFERENCE_THETA_MEANS,
            theta_max: 20.0,
            theta_grid: 2000,
            beta_low_quintiles: 0.05,
            beta_male_premium: 1.2,
            beta_sd_ratio: 0.2,
            alpha_scale: 0.5,
            eu_kappa: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsConfig {
    pub r_low: f64,
    pub r_high: f64,
    pub p_below_one: [f64; 5],
    pub grid: usize,
}

impl Default for CostsConfig {
    fn default() -> Self {
        CostsConfig { r_low: 0.5, r_high: 6.5, p_below_one: [0.06, 0.06, 0.06, 0.14, 0.14], grid: 2001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub theta_draws: usize,
    pub bootstrap: usize,
    /// Ridge on standardized firm intercepts in the runner-up logit.
    pub intercept_ridge: f64,
    /// Share of smallest gradients used to extrapolate ζ.
    pub zeta_share: f64,
    pub cost_grid: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig { theta_draws: 10_000, bootstrap: 200, intercept_ridge: 1.0, zeta_share: 0.1, cost_grid: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub retirees: usize,
    pub sims: usize,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig { retirees: 500, sims: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub population: usize,
    pub savings: SavingsConfig,
    pub demographics: DemographicsConfig,
    pub mortality: MortalityConfig,
    pub valuation: ValuationConfig,
    pub firms: FirmsConfig,
    pub entry: EntryConfig,
    pub offers: OffersConfig,
    pub preferences: PreferencesConfig,
    pub costs: CostsConfig,
    pub estimation: EstimationConfig,
    pub counterfactual: CounterfactualConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 20_240_601,
            population: 20_000,
            savings: SavingsConfig::default(),
            demographics: DemographicsConfig::default(),
            mortality: MortalityConfig::default(),
            valuation: ValuationConfig::default(),
            firms: FirmsConfig::default(),
            entry: EntryConfig {
                threshold_mode: ThresholdMode::Exogenous { r_star: 1.75 },
                ..EntryConfig::default()
            },
            offers: OffersConfig::default(),
            preferences: PreferencesConfig::default(),
            costs: CostsConfig::default(),
            estimation: EstimationConfig::default(),
            counterfactual: CounterfactualConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved configuration, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.population == 0 {
            return bad("population must be positive");
        }
        self.savings.cutpoints()?;
        let d = &self.demographics;
        let share = |x: f64| (0.0..=1.0).contains(&x);
        if !(share(d.female_share) && share(d.married_share_male) && share(d.married_share_female)) {
            return bad("demographic shares must lie in [0, 1]");
        }
        if !(share(d.before_share) && share(d.after_share) && d.before_share + d.after_share <= 1.0) {
            return bad("retirement-age shares must lie in [0, 1] and sum to at most 1");
        }
        if (d.channel_shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 || d.channel_shares.iter().any(|s| *s < 0.0) {
            return bad("channel shares must be non-negative and sum to 1");
        }
        if (self.firms.rating_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("rating probabilities must sum to 1");
        }
        if (self.firms.count as usize) < *self.entry.potential_entrants.iter().max().unwrap_or(&0) {
            return bad("fewer firms than potential entrants");
        }
        if !(0.0..1.0).contains(&self.mortality.censoring) {
            return bad("censoring share must lie in [0, 1)");
        }
        if self.valuation.contracts.is_empty() {
            return bad("contract menu is empty");
        }
        self.entry.validate()?;
        self.offers.policy.validate()?;
        self.crra().validate()?;
        self.mortality_model()?;
        Ok(())
    }

    pub fn crra(&self) -> CrraParams {
        CrraParams::from_annual_return(self.valuation.gamma, self.valuation.annual_return)
    }

    pub fn mortality_model(&self) -> Result<GompertzModel> {
        GompertzModel::new(self.mortality.g, self.mortality.tau)
    }

    pub fn cost_laws(&self) -> Result<Vec<CostLaw>> {
        let c = &self.costs;
        (1..=5u8).map(|q| CostLaw::calibrated(q, c.p_below_one[q as usize - 1], c.r_low, c.r_high, c.grid)).collect()
    }

    pub fn bequest_laws(&self) -> Result<Vec<BequestPrefDist>> {
        let p = &self.preferences;
        (1..=5u8)
            .map(|q| BequestPrefDist::truncated_exponential(q, p.zeta, p.theta_means[q as usize - 1], p.theta_max, p.theta_grid))
            .collect()
    }

    /// True β law for every group, given per-quintile utility scales.
    pub fn risk_groups(&self, utility_scale: &[f64; 5]) -> BTreeMap<GroupKey, RiskPrefGroup> {
        let p = &self.preferences;
        GroupKey::all()
            .into_iter()
            .map(|key| {
                let scale = utility_scale[key.quintile as usize - 1];
                let base = if key.quintile <= 2 { p.beta_low_quintiles * scale } else { 0.0 };
                let mean = if key.gender == Gender::Male { base * p.beta_male_premium } else { base };
                let sd = p.beta_sd_ratio * p.beta_low_quintiles * scale;
                (key, RiskPrefGroup { group_key: key, beta_mean: mean, beta_var: sd * sd })
            })
            .collect()
    }

    /// True information costs: the reference pattern rescaled to each
    /// quintile's utility scale.
    pub fn info_costs(&self, utility_scale: &[f64; 5]) -> Result<InfoCostTable> {
        let mut t = InfoCostTable::default();
        let reference = InfoCostTable::REFERENCE[0][0];
        for (qi, row) in InfoCostTable::REFERENCE.iter().enumerate() {
            for (c, a) in Channel::ALL.into_iter().zip(row) {
                t.set(c, qi as u8 + 1, self.preferences.alpha_scale * a / reference * utility_scale[qi])?;
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str("seed = 7\npopulation = 10\n[preferences]\nzeta = 0.3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.preferences.zeta, 0.3);
        assert_eq!(cfg.firms.count, 15);
    }

    #[test]
    fn unknown_keys_and_bad_cutpoints_rejected() {
        assert!(ScenarioConfig::from_toml_str("sede = 7\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[savings]\nquintile_cutpoints = [3.0, 2.0, 4.0, 5.0]\n").is_err());
    }

    #[test]
    fn lognormal_matches_targets() {
        let s = SavingsConfig::default();
        let (mu, sigma) = s.lognormal().unwrap();
        assert!((mu.exp() - s.median).abs() < 1e-6);
        assert!(((mu + sigma * sigma / 2.0).exp() - s.mean).abs() < 1e-6);
        let cuts = s.cutpoints().unwrap();
        assert!(cuts[1] < s.median && cuts[2] > s.median);
    }
}
