//! Synthetic populations, firms and mortality records.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lifetables::{sample_death_age, CovariateVector, Gender, MortalityRecord};
use crate::market::simulate::MarketConfig;
use crate::market::{FirmSpec, RetireeProfile};
use crate::preferences::{AgeBin, Channel};
use crate::rng::{stream, StreamRng};
use crate::valuation::{life_factors, ContractSpec, Lifetime};

fn quintile_of(savings: f64, cuts: &[f64]) -> u8 {
    cuts.iter().filter(|c| savings >= **c).count() as u8 + 1
}

fn draw_age_months(cfg: &ScenarioConfig, gender: Gender, rng: &mut StreamRng) -> f64 {
    let d = &cfg.demographics;
    let nra = f64::from(AgeBin::normal_retirement_years(gender));
    let u: f64 = rng.random();
    let years = if u < d.before_share {
        nra - f64::from(rng.random_range(1..=5u32))
    } else if u < d.before_share + d.after_share {
        nra + f64::from(rng.random_range(1..=5u32))
    } else {
        nra
    };
    years * 12.0 + f64::from(rng.random_range(0..12u32))
}

fn draw_person(cfg: &ScenarioConfig, rng: &mut StreamRng) -> Result<(CovariateVector, Option<CovariateVector>)> {
    let d = &cfg.demographics;
    let gender = if rng.random::<f64>() < d.female_share { Gender::Female } else { Gender::Male };
    let age = draw_age_months(cfg, gender, rng);
    let (mu, sigma) = cfg.savings.lognormal()?;
    let savings = LogNormal::new(mu, sigma)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng)
        .max(cfg.savings.minimum);
    let married_share = match gender {
        Gender::Male => d.married_share_male,
        Gender::Female => d.married_share_female,
    };
    let married = rng.random::<f64>() < married_share;
    let year = rng.random_range(d.retirement_years[0]..=d.retirement_years[1]);
    let cohort = year - (age / 12.0).floor() as i32;
    let x = CovariateVector { age_at_retirement: age, gender, married, savings, birth_cohort: cohort };
    let gap = Normal::new(d.spouse_age_gap_years, d.spouse_age_gap_sd)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    let spouse = married.then(|| {
        // Positive gap: the husband is older.
        let sign = if gender == Gender::Male { -1.0 } else { 1.0 };
        let sp_age = (age + sign * gap * 12.0).round().max(216.0);
        CovariateVector {
            age_at_retirement: sp_age,
            gender: gender.other(),
            married: true,
            savings,
            birth_cohort: year - (sp_age / 12.0).floor() as i32,
        }
    });
    Ok((x, spouse))
}

fn draw_channel(cfg: &ScenarioConfig, rng: &mut StreamRng) -> Channel {
    let u: f64 = rng.random();
    let s = cfg.demographics.channel_shares;
    if u < s[0] {
        Channel::Afp
    } else if u < s[0] + s[1] {
        Channel::SalesAgent
    } else {
        Channel::Advisor
    }
}

pub fn synth_population(cfg: &ScenarioConfig) -> Result<Vec<RetireeProfile>> {
    let cuts = cfg.savings.cutpoints()?;
    (0..cfg.population as u64)
        .map(|id| {
            let mut rng = stream(cfg.seed, "synth", id);
            let (covariates, spouse) = draw_person(cfg, &mut rng)?;
            let channel = draw_channel(cfg, &mut rng);
            let quintile = quintile_of(covariates.savings, &cuts);
            Ok(RetireeProfile { id, covariates, spouse, channel, quintile })
        })
        .collect()
}

pub fn synth_firms(cfg: &ScenarioConfig) -> Vec<FirmSpec> {
    let mut rng = stream(cfg.seed, "firms", 0);
    let p = cfg.firms.rating_probs;
    (0..cfg.firms.count)
        .map(|id| {
            let u: f64 = rng.random();
            let rating = if u < p[0] { 1 } else if u < p[0] + p[1] { 2 } else { 3 };
            FirmSpec { id, rating }
        })
        .collect()
}

/// Right-censored records from the true mortality law, with censoring times
/// `t0 + U·C` and `C` chosen so the configured share is censored.
pub fn synth_mortality_records(cfg: &ScenarioConfig) -> Result<Vec<MortalityRecord>> {
    let model = cfg.mortality_model()?;
    let mut draws = Vec::with_capacity(cfg.mortality.records);
    for id in 0..cfg.mortality.records as u64 {
        let mut rng = stream(cfg.seed, "mortality", id);
        let (x, _) = draw_person(cfg, &mut rng)?;
        let u = 1.0 - rng.random::<f64>();
        let death = sample_death_age(model.shape, model.lambda(&x), x.age_at_retirement, u);
        let v: f64 = rng.random();
        draws.push((id, x, death, v));
    }
    let censored = |c: f64| draws.iter().filter(|(_, x, death, v)| x.age_at_retirement + v * c < *death).count();
    let target = (cfg.mortality.censoring * draws.len() as f64).round() as usize;
    let (mut lo, mut hi) = (0.0, 1e5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;
    Ok(draws
        .into_iter()
        .map(|(id, x, death, v)| {
            let cens = x.age_at_retirement + v * c;
            MortalityRecord {
                id,
                covariates: x,
                entry_age: x.age_at_retirement,
                exit_age: death.min(cens),
                died: death <= cens,
            }
        })
        .collect())
}

/// Magnitude of `ρ + θ·b` (θ = 0) at the fair pension of an unmarried man
/// retiring at the statutory age with the quintile's midpoint savings.
pub fn utility_scales(cfg: &ScenarioConfig) -> Result<[f64; 5]> {
    let (mu, sigma) = cfg.savings.lognormal()?;
    let n = statrs::distribution::Normal::standard();
    let model = cfg.mortality_model()?;
    let crra = cfg.crra();
    let mut out = [0.0; 5];
    for (qi, p) in [0.1, 0.3, 0.5, 0.7, 0.9].iter().enumerate() {
        use statrs::distribution::ContinuousCDF;
        let s = (mu + sigma * n.inverse_cdf(*p)).exp().max(cfg.savings.minimum);
        let x = CovariateVector {
            age_at_retirement: 65.0 * 12.0,
            gender: Gender::Male,
            married: false,
            savings: s,
            birth_cohort: 1950,
        };
        let f = life_factors(&Lifetime::from_model(&model, &x, x.age_at_retirement), None, &ContractSpec::new(0.0, 0.0, false), &crra)?;
        out[qi] = (crra.u(s / f.unc_i) * f.utility_weight(0.0, &crra)).abs();
    }
    Ok(out)
}

pub fn market_config(cfg: &ScenarioConfig) -> Result<MarketConfig> {
    let scales = utility_scales(cfg)?;
    Ok(MarketConfig {
        crra: cfg.crra(),
        mortality: cfg.mortality_model()?,
        contracts: cfg.valuation.contracts.clone(),
        temporary_payment_multiple: cfg.valuation.temporary_payment_multiple,
        firms: synth_firms(cfg),
        entry: cfg.entry.clone(),
        offer_policy: cfg.offers.policy,
        contract_loading_max: cfg.offers.contract_loading_max,
        eu_kappa: cfg.preferences.eu_kappa,
        bequest: cfg.bequest_laws()?,
        risk: cfg.risk_groups(&scales),
        alpha: cfg.info_costs(&scales)?,
        cost_laws: cfg.cost_laws()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_of_one() {
        let cfg = ScenarioConfig { population: 1, ..ScenarioConfig::default() };
        assert_eq!(synth_population(&cfg).unwrap().len(), 1);
    }

    #[test]
    fn quintile_shares_are_balanced() {
        let cfg = ScenarioConfig { population: 20_000, ..ScenarioConfig::default() };
        let pop = synth_population(&cfg).unwrap();
        for q in 1..=5u8 {
            let share = pop.iter().filter(|r| r.quintile == q).count() as f64 / pop.len() as f64;
            // The savings floor sits inside the bottom quintile, so shares stay near 20%.
            assert!((share - 0.2).abs() < 0.015, "Q{q}: {share}");
        }
    }

    #[test]
    fn censoring_share_is_hit() {
        let mut cfg = ScenarioConfig::default();
        cfg.mortality.records = 5_000;
        let recs = synth_mortality_records(&cfg).unwrap();
        let share = recs.iter().filter(|r| !r.died).count() as f64 / recs.len() as f64;
        assert!((share - 0.3).abs() < 1e-3);
    }

    #[test]
    fn utility_scales_fall_with_savings() {
        let s = utility_scales(&ScenarioConfig::default()).unwrap();
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }
}
