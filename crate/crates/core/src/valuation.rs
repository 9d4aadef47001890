//! Discounted life factors, CRRA pension and bequest utilities, and the
//! pension-from-utility inversion.
//!
//! Time inside the integrals is measured in months since retirement.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lifetables::{survival_unchecked, CovariateVector, GompertzModel};
use crate::quadrature::integrate;

/// Fraction of the pension paid to a surviving spouse after the guarantee.
pub const SURVIVOR_SHARE: f64 = 0.6;

const TAIL_SURVIVAL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    /// Deferral in months.
    pub deferral: f64,
    /// Guaranteed period in months.
    pub guarantee: f64,
    pub spouse_covered: bool,
    pub temporary_payment_multiple: f64,
}

impl ContractSpec {
    pub fn new(deferral: f64, guarantee: f64, spouse_covered: bool) -> Self {
        ContractSpec { deferral, guarantee, spouse_covered, temporary_payment_multiple: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deferral >= 0.0 && self.deferral.is_finite()) {
            return domain(format!("deferral must be finite and >= 0, got {}", self.deferral));
        }
        if !(self.guarantee >= 0.0 && self.guarantee.is_finite()) {
            return domain(format!("guarantee must be finite and >= 0, got {}", self.guarantee));
        }
        if !(self.temporary_payment_multiple > 0.0) {
            return domain("temporary payment multiple must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrraParams {
    pub gamma: f64,
    /// Continuous monthly discount rate.
    pub delta: f64,
}

impl CrraParams {
    /// Discount rate from an annual market return.
    pub fn from_annual_return(gamma: f64, annual_return: f64) -> Self {
        CrraParams { gamma, delta: annual_return.ln_1p() / 12.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return domain(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return domain(format!("delta must be positive, got {}", self.delta));
        }
        Ok(())
    }

    /// `u(P) = P^(1-γ)/(1-γ)`.
    pub fn u(&self, p: f64) -> f64 {
        p.powf(1.0 - self.gamma) / (1.0 - self.gamma)
    }
}

impl Default for CrraParams {
    fn default() -> Self {
        CrraParams::from_annual_return(3.0, 0.03)
    }
}

/// Gompertz mortality of one person, conditional on being alive at `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    pub shape: f64,
    pub lambda: f64,
    /// Age in months when the contract starts.
    pub t0: f64,
}

impl Lifetime {
    pub fn from_model(model: &GompertzModel, x: &CovariateVector, t0: f64) -> Self {
        Lifetime { shape: model.shape, lambda: model.lambda(x), t0 }
    }

    /// Survival `s` months after `t0`.
    #[inline]
    pub fn survival(&self, s: f64) -> f64 {
        survival_unchecked(self.shape, self.lambda, self.t0, s)
    }

    /// Months after `t0` at which survival falls to `level`.
    pub fn horizon(&self, level: f64) -> f64 {
        let c = self.lambda / self.shape * (self.shape * self.t0).exp();
        (-level.ln() / c).ln_1p() / self.shape
    }

    fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.lambda > 0.0 && self.t0 >= 0.0) {
            return domain(format!("invalid lifetime {:?}", self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifeFactors {
    pub d_r: f64,
    pub d_r_dp: f64,
    pub g_f: f64,
    pub s_f: f64,
    pub unc_i: f64,
    pub temporary_payment_multiple: f64,
}

impl LifeFactors {
    pub fn from_parts(d_r: f64, d_r_dp: f64, g_f: f64, s_f: f64, temporary_payment_multiple: f64) -> Self {
        LifeFactors {
            d_r,
            d_r_dp,
            g_f,
            s_f,
            unc_i: d_r + g_f + SURVIVOR_SHARE * s_f,
            temporary_payment_multiple,
        }
    }

    pub fn has_bequest(&self) -> bool {
        self.g_f > 0.0 || self.s_f > 0.0
    }

    /// Coefficient on `u(P)` of `ρ(P) + θ·b(P)`.
    pub fn utility_weight(&self, theta: f64, crra: &CrraParams) -> f64 {
        let k = 1.0 - crra.gamma;
        self.d_r
            + self.temporary_payment_multiple.powf(k) * self.d_r_dp
            + theta * (self.g_f + SURVIVOR_SHARE.powf(k) * self.s_f)
    }
}

/// Discounted life factors for one contract.
pub fn life_factors(
    retiree: &Lifetime,
    spouse: Option<&Lifetime>,
    contract: &ContractSpec,
    crra: &CrraParams,
) -> Result<LifeFactors> {
    contract.validate()?;
    crra.validate()?;
    retiree.validate()?;
    if contract.spouse_covered != spouse.is_some() {
        return domain("spouse mortality must be given exactly when the contract covers a spouse");
    }
    let delta = crra.delta;
    let horizon = retiree.horizon(TAIL_SURVIVAL);
    let d = contract.deferral.min(horizon);
    let end_g = (contract.deferral + contract.guarantee).min(horizon);

    let alive = |s: f64| retiree.survival(s) * (-delta * s).exp();
    let dead = |s: f64| (1.0 - retiree.survival(s)) * (-delta * s).exp();

    let d_r_dp = integrate(alive, 0.0, d, QUAD_TOL)?.value;
    let d_r = integrate(alive, d, horizon, QUAD_TOL)?.value;
    let g_f = integrate(dead, d, end_g, QUAD_TOL)?.value;
    let s_f = match spouse {
        Some(sp) => {
            sp.validate()?;
            let start = contract.deferral + contract.guarantee;
            let end = sp.horizon(TAIL_SURVIVAL);
            if end > start {
                integrate(
                    |s| (1.0 - retiree.survival(s)) * sp.survival(s) * (-delta * s).exp(),
                    start,
                    end,
                    QUAD_TOL,
                )?
                .value
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    Ok(LifeFactors::from_parts(d_r, d_r_dp, g_f, s_f, contract.temporary_payment_multiple))
}

fn check_pension(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return domain(format!("pension must be positive, got {p}"));
    }
    Ok(())
}

/// `ρ(P) = u(P)·D_R + u(mP)·D_R_DP`.
pub fn pension_utility(p: f64, f: &LifeFactors, crra: &CrraParams) -> Result<f64> {
    check_pension(p)?;
    Ok(crra.u(p) * f.d_r + crra.u(f.temporary_payment_multiple * p) * f.d_r_dp)
}

/// `b(P) = u(P)·G_F + u(0.6P)·S_F`.
pub fn bequest_utility(p: f64, f: &LifeFactors, crra: &CrraParams) -> Result<f64> {
    check_pension(p)?;
    if !f.has_bequest() {
        return Ok(0.0);
    }
    Ok(crra.u(p) * f.g_f + crra.u(SURVIVOR_SHARE * p) * f.s_f)
}

/// `ρ(P) + θ·b(P)`.
pub fn total_utility(p: f64, theta: f64, f: &LifeFactors, crra: &CrraParams) -> Result<f64> {
    check_pension(p)?;
    Ok(crra.u(p) * f.utility_weight(theta, crra))
}

/// Pension `P` with `ρ(P) + θ·b(P) = ϖ`.
pub fn invert_pension(varpi: f64, theta: f64, f: &LifeFactors, crra: &CrraParams) -> Result<f64> {
    if !(varpi < 0.0) {
        return domain(format!("utility level must be negative, got {varpi}"));
    }
    if !(theta >= 0.0) {
        return domain(format!("bequest weight must be non-negative, got {theta}"));
    }
    let k = f.utility_weight(theta, crra);
    if !(k > 0.0) {
        return domain("life-factor combination must be positive");
    }
    let one_minus = 1.0 - crra.gamma;
    Ok((one_minus * varpi / k).powf(1.0 / one_minus))
}

pub fn money_worth(p: f64, f: &LifeFactors, savings: f64) -> Result<f64> {
    if !(savings > 0.0) {
        return domain(format!("savings must be positive, got {savings}"));
    }
    Ok(p * f.unc_i / savings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeFactorRow {
    pub retiree_id: u64,
    pub d: f64,
    pub g: f64,
    #[serde(rename = "D_R")]
    pub d_r: f64,
    #[serde(rename = "D_R_DP")]
    pub d_r_dp: f64,
    #[serde(rename = "G_F")]
    pub g_f: f64,
    #[serde(rename = "S_F")]
    pub s_f: f64,
    pub unc_i: f64,
}

impl LifeFactorRow {
    pub fn new(retiree_id: u64, contract: &ContractSpec, f: &LifeFactors) -> Self {
        LifeFactorRow {
            retiree_id,
            d: contract.deferral,
            g: contract.guarantee,
            d_r: f.d_r,
            d_r_dp: f.d_r_dp,
            g_f: f.g_f,
            s_f: f.s_f,
            unc_i: f.unc_i,
        }
    }
}

pub fn write_life_factors_csv<W: Write>(rows: &[LifeFactorRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn retiree() -> Lifetime {
        Lifetime { shape: 0.0085, lambda: (-13.78f64).exp(), t0: 780.0 }
    }

    fn spouse() -> Lifetime {
        Lifetime { shape: 0.0085, lambda: (-14.9f64).exp(), t0: 750.0 }
    }

    #[test]
    fn heavy_discounting_kills_all_factors() {
        let crra = CrraParams { gamma: 3.0, delta: 10.0 };
        let f = life_factors(&retiree(), Some(&spouse()), &ContractSpec::new(12.0, 120.0, true), &crra).unwrap();
        for v in [f.d_r, f.d_r_dp, f.g_f, f.s_f] {
            assert!(v < 0.11, "{v}");
        }
        let f = life_factors(&retiree(), Some(&spouse()), &ContractSpec::new(36.0, 120.0, true), &crra).unwrap();
        assert!(f.d_r < 1e-100 && f.g_f < 1e-100 && f.s_f < 1e-100);
    }

    #[test]
    fn immediate_single_life_has_no_bequest() {
        let f = life_factors(&retiree(), None, &ContractSpec::new(0.0, 0.0, false), &CrraParams::default()).unwrap();
        assert_eq!(f.g_f, 0.0);
        assert_eq!(f.s_f, 0.0);
        assert_eq!(f.d_r_dp, 0.0);
        assert_eq!(f.unc_i, f.d_r);
        assert_eq!(bequest_utility(1000.0, &f, &CrraParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn spouse_mismatch_is_rejected() {
        let c = ContractSpec::new(0.0, 0.0, true);
        assert!(life_factors(&retiree(), None, &c, &CrraParams::default()).is_err());
    }

    #[test]
    fn pension_utility_matches_monthly_sum() {
        let crra = CrraParams::default();
        let r = retiree();
        let f = life_factors(&r, None, &ContractSpec::new(0.0, 0.0, false), &crra).unwrap();
        let p = 500.0;
        let rate = crra.delta.exp_m1();
        let mut sum = 0.0;
        for t in 0..2000 {
            sum += crra.u(p) * r.survival(t as f64) * (1.0 + rate).powi(-t);
        }
        let rho = pension_utility(p, &f, &crra).unwrap();
        assert!(((rho - sum) / sum).abs() < 0.01, "{rho} vs {sum}");
    }

    #[test]
    fn doubling_pension_quarters_utility() {
        let crra = CrraParams::default();
        let f = LifeFactors::from_parts(150.0, 20.0, 5.0, 10.0, 2.0);
        let a = pension_utility(300.0, &f, &crra).unwrap();
        let b = pension_utility(600.0, &f, &crra).unwrap();
        assert!((b / a - 0.25).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_for_gamma_three() {
        let crra = CrraParams::default();
        let f = LifeFactors::from_parts(150.0, 20.0, 5.0, 10.0, 2.0);
        let p = 400.0;
        let u = crra.u(p);
        let rho = pension_utility(p, &f, &crra).unwrap();
        assert!((rho - u * (150.0 + 20.0 / 4.0)).abs() < 1e-15);
        let b = bequest_utility(p, &f, &crra).unwrap();
        assert!((b - u * (5.0 + 10.0 / 0.36)).abs() < 1e-15);
    }

    #[test]
    fn inversion_special_cases() {
        let crra = CrraParams::default();
        let f = LifeFactors::from_parts(150.0, 20.0, 5.0, 10.0, 2.0);
        let theta = 1.7;
        let k = f.utility_weight(theta, &crra);
        assert!((invert_pension(-k / 2.0, theta, &f, &crra).unwrap() - 1.0).abs() < 1e-14);
        let p0 = invert_pension(-0.01, 0.0, &f, &crra).unwrap();
        assert!((p0 - ((150.0 + 5.0) / 0.02f64).sqrt()).abs() < 1e-9);
        assert!(invert_pension(0.0, 1.0, &f, &crra).is_err());
    }

    #[test]
    fn money_worth_is_one_at_fair_pension() {
        let f = LifeFactors::from_parts(150.0, 0.0, 0.0, 0.0, 2.0);
        let s = 90_000.0;
        assert!((money_worth(s / f.unc_i, &f, s).unwrap() - 1.0).abs() < 1e-15);
        assert!(money_worth(1.0, &f, 0.0).is_err());
    }

    #[test]
    fn married_costs_at_least_as_much() {
        let crra = CrraParams::default();
        for g in [0.0, 120.0, 240.0] {
            let single = life_factors(&retiree(), None, &ContractSpec::new(0.0, g, false), &crra).unwrap();
            let couple = life_factors(&retiree(), Some(&spouse()), &ContractSpec::new(0.0, g, true), &crra).unwrap();
            assert!(couple.unc_i >= single.unc_i);
        }
    }

    #[test]
    fn unc_is_invariant_to_gamma() {
        let a = CrraParams { gamma: 3.0, delta: 0.0025 };
        let b = CrraParams { gamma: 5.0, delta: 0.0025 };
        let c = ContractSpec::new(12.0, 120.0, true);
        let fa = life_factors(&retiree(), Some(&spouse()), &c, &a).unwrap();
        let fb = life_factors(&retiree(), Some(&spouse()), &c, &b).unwrap();
        assert_eq!(fa.unc_i, fb.unc_i);
    }

    #[test]
    fn csv_header() {
        let f = LifeFactors::from_parts(150.0, 0.0, 0.0, 0.0, 2.0);
        let mut buf = Vec::new();
        write_life_factors_csv(&[LifeFactorRow::new(1, &ContractSpec::new(0.0, 0.0, false), &f)], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("retiree_id,d,g,D_R,D_R_DP,G_F,S_F,unc_i\n"));
    }
}
