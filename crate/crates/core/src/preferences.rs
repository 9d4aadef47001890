//! Demand-side heterogeneity and rational-inattention choice.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lifetables::Gender;

pub const N_QUINTILES: u8 = 5;

/// Mean bequest weight by savings quintile, zeros included.
pub const REFERENCE_THETA_MEANS: [f64; 5] = [2.784, 2.899, 2.971, 3.208, 3.812];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Afp,
    SalesAgent,
    Advisor,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Afp, Channel::SalesAgent, Channel::Advisor];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Afp => "afp",
            Channel::SalesAgent => "sales_agent",
            Channel::Advisor => "advisor",
        }
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown channel '{s}'")))
    }
}

/// Retirement age relative to the statutory age for the retiree's gender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBin {
    Before,
    At,
    After,
}

impl AgeBin {
    pub const ALL: [AgeBin; 3] = [AgeBin::Before, AgeBin::At, AgeBin::After];

    pub fn normal_retirement_years(gender: Gender) -> u32 {
        match gender {
            Gender::Male => 65,
            Gender::Female => 60,
        }
    }

    pub fn classify(gender: Gender, age_months: f64) -> AgeBin {
        let years = (age_months / 12.0).floor() as i64;
        let nra = i64::from(Self::normal_retirement_years(gender));
        match years.cmp(&nra) {
            std::cmp::Ordering::Less => AgeBin::Before,
            std::cmp::Ordering::Equal => AgeBin::At,
            std::cmp::Ordering::Greater => AgeBin::After,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeBin::Before => "before",
            AgeBin::At => "at",
            AgeBin::After => "after",
        }
    }
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::Male => "male",
        Gender::Female => "female",
    }
}

/// One of the 90 demand groups: gender × age bin × quintile × channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct GroupKey {
    pub gender: Gender,
    pub age_bin: AgeBin,
    pub quintile: u8,
    pub channel: Channel,
}

impl GroupKey {
    pub fn all() -> Vec<GroupKey> {
        let mut out = Vec::with_capacity(90);
        for channel in Channel::ALL {
            for quintile in 1..=N_QUINTILES {
                for age_bin in AgeBin::ALL {
                    for gender in [Gender::Male, Gender::Female] {
                        out.push(GroupKey { gender, age_bin, quintile, channel });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/Q{}/{}",
            gender_str(self.gender),
            self.age_bin.as_str(),
            self.quintile,
            self.channel.as_str()
        )
    }
}

impl From<GroupKey> for String {
    fn from(k: GroupKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for GroupKey {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for GroupKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("malformed group key '{s}'"));
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let gender = match parts[0] {
            "male" => Gender::Male,
            "female" => Gender::Female,
            _ => return Err(bad()),
        };
        let age_bin = AgeBin::ALL.into_iter().find(|a| a.as_str() == parts[1]).ok_or_else(bad)?;
        let quintile: u8 = parts[2].strip_prefix('Q').and_then(|q| q.parse().ok()).ok_or_else(bad)?;
        if !(1..=N_QUINTILES).contains(&quintile) {
            return Err(bad());
        }
        let channel = parts[3].parse()?;
        Ok(GroupKey { gender, age_bin, quintile, channel })
    }
}

/// Bequest weight law for one savings quintile: a mass `zeta` at zero plus a
/// continuous part on `(0, θ̄]` tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BequestPrefDist {
    pub quintile: u8,
    pub zeta: f64,
    pub theta_grid: Vec<f64>,
    pub theta_cdf: Vec<f64>,
}

impl BequestPrefDist {
    pub fn new(quintile: u8, zeta: f64, theta_grid: Vec<f64>, theta_cdf: Vec<f64>) -> Result<Self> {
        let d = BequestPrefDist { quintile, zeta, theta_grid, theta_cdf };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zeta) {
            return domain(format!("zeta must lie in [0, 1], got {}", self.zeta));
        }
        let (g, c) = (&self.theta_grid, &self.theta_cdf);
        if g.len() < 2 || g.len() != c.len() {
            return domain("theta grid and CDF must have equal length >= 2");
        }
        if g[0] != 0.0 || c[0] != 0.0 {
            return domain("continuous part must start at theta = 0 with CDF 0");
        }
        if (c[c.len() - 1] - 1.0).abs() > 1e-12 {
            return domain("continuous CDF must reach 1 at the upper bound");
        }
        if g.windows(2).any(|w| !(w[1] > w[0])) || c.windows(2).any(|w| w[1] < w[0]) {
            return domain("theta grid must increase and CDF must be monotone");
        }
        Ok(())
    }

    /// Continuous part with a truncated exponential shape whose overall mean
    /// (zeros included) equals `overall_mean`.
    pub fn truncated_exponential(quintile: u8, zeta: f64, overall_mean: f64, theta_max: f64, n: usize) -> Result<Self> {
        if !(zeta < 1.0) {
            return BequestPrefDist::new(quintile, 1.0, vec![0.0, theta_max], vec![0.0, 1.0]);
        }
        let target = overall_mean / (1.0 - zeta);
        if !(target > 0.0 && target < 0.5 * theta_max) {
            return domain(format!("continuous mean {target} not attainable below {theta_max}"));
        }
        let mean_at = |k: f64| {
            let e = (-k * theta_max).exp();
            1.0 / k - theta_max * e / (1.0 - e)
        };
        // Mean decreases in the rate; bisect on log scale.
        let (mut lo, mut hi) = (1e-9_f64, 1e3_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mean_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = (lo * hi).sqrt();
        let norm = -(-k * theta_max).exp_m1();
        let grid: Vec<f64> = (0..n).map(|i| theta_max * i as f64 / (n - 1) as f64).collect();
        let mut cdf: Vec<f64> = grid.iter().map(|t| -(-k * t).exp_m1() / norm).collect();
        cdf[n - 1] = 1.0;
        BequestPrefDist::new(quintile, zeta, grid, cdf)
    }

    pub fn theta_max(&self) -> f64 {
        *self.theta_grid.last().expect("validated grid")
    }

    /// `F̃(t)` by linear interpolation.
    pub fn continuous_cdf(&self, t: f64) -> f64 {
        let g = &self.theta_grid;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.theta_max() {
            return 1.0;
        }
        let i = g.partition_point(|x| *x <= t);
        let (x0, x1) = (g[i - 1], g[i]);
        let (y0, y1) = (self.theta_cdf[i - 1], self.theta_cdf[i]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    /// `F(t) = ζ + (1 − ζ)·F̃(t)` for `t >= 0`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.zeta + (1.0 - self.zeta) * self.continuous_cdf(t)
        }
    }

    /// Inverse of `F̃` at `u ∈ [0, 1]`.
    pub fn continuous_quantile(&self, u: f64) -> f64 {
        let c = &self.theta_cdf;
        let u = u.clamp(0.0, 1.0);
        let i = c.partition_point(|y| *y < u).clamp(1, c.len() - 1);
        let (y0, y1) = (c[i - 1], c[i]);
        let (x0, x1) = (self.theta_grid[i - 1], self.theta_grid[i]);
        if y1 > y0 {
            x0 + (x1 - x0) * (u - y0) / (y1 - y0)
        } else {
            x0
        }
    }

    /// Quantile of the full law, zeros included.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= self.zeta {
            0.0
        } else {
            self.continuous_quantile((p - self.zeta) / (1.0 - self.zeta))
        }
    }

    /// Draw using a single uniform.
    pub fn draw_from_uniform(&self, u: f64) -> f64 {
        if u < self.zeta {
            0.0
        } else {
            self.continuous_quantile((u - self.zeta) / (1.0 - self.zeta))
        }
    }

    /// Mean and standard deviation of the full law.
    pub fn moments(&self) -> (f64, f64) {
        let (g, c) = (&self.theta_grid, &self.theta_cdf);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 1..g.len() {
            // Piecewise-uniform density between grid points.
            let mass = c[i] - c[i - 1];
            let (a, b) = (g[i - 1], g[i]);
            m1 += mass * 0.5 * (a + b);
            m2 += mass * (a * a + a * b + b * b) / 3.0;
        }
        let w = 1.0 - self.zeta;
        let mean = w * m1;
        let var = w * m2 - mean * mean;
        (mean, var.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPrefGroup {
    pub group_key: GroupKey,
    pub beta_mean: f64,
    pub beta_var: f64,
}

impl RiskPrefGroup {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_var >= 0.0) || !self.beta_mean.is_finite() {
            return domain(format!("invalid risk preference for {}", self.group_key));
        }
        Ok(())
    }
}

/// Information-processing cost per channel and quintile.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InfoCostTable {
    entries: BTreeMap<(Channel, u8), f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InfoCostRow {
    channel: Channel,
    quintile: u8,
    alpha: f64,
}

impl InfoCostTable {
    /// Medians by quintile for AFP, sales agent and advisor channels.
    pub const REFERENCE: [[f64; 3]; 5] = [
        [0.009, 0.027, 0.006],
        [0.006, 0.019, 0.004],
        [0.005, 0.013, 0.003],
        [0.005, 0.012, 0.003],
        [0.005, 0.012, 0.003],
    ];

    pub fn reference() -> Self {
        let mut t = InfoCostTable::default();
        for (qi, row) in Self::REFERENCE.iter().enumerate() {
            for (c, a) in Channel::ALL.into_iter().zip(row) {
                t.entries.insert((c, qi as u8 + 1), *a);
            }
        }
        t
    }

    pub fn set(&mut self, channel: Channel, quintile: u8, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        self.entries.insert((channel, quintile), alpha);
        Ok(())
    }

    pub fn get(&self, channel: Channel, quintile: u8) -> Option<f64> {
        self.entries.get(&(channel, quintile)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Channel, u8, f64)> + '_ {
        self.entries.iter().map(|(&(c, q), &a)| (c, q, a))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (channel, quintile, alpha) in self.iter() {
            wtr.serialize(InfoCostRow { channel, quintile, alpha })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut t = InfoCostTable::default();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: InfoCostRow = row?;
            t.set(row.channel, row.quintile, row.alpha)?;
        }
        Ok(t)
    }
}

/// Choice probabilities over `J` firm options and the bargaining option (last).
pub fn ri_choice_probs(utilities: &[f64], eu_bargain: f64, priors: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || alpha.is_nan() {
        return domain(format!("alpha must be positive, got {alpha}"));
    }
    if utilities.len() != priors.len() {
        return domain("utilities and priors must have the same length");
    }
    if priors.iter().any(|p| !(*p >= 0.0)) || priors.iter().sum::<f64>() > 1.0 + 1e-12 {
        return domain("priors must be non-negative and sum to at most 1");
    }
    let mut logits: Vec<f64> = utilities
        .iter()
        .zip(priors)
        .map(|(u, p)| if *p > 0.0 { p.ln() + u / alpha } else { f64::NEG_INFINITY })
        .collect();
    logits.push(eu_bargain / alpha);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// `α = σ(1 − σ) / (∂σ/∂ρ)`.
pub fn info_cost_from_elasticity(sigma: f64, dsigma_drho: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return domain(format!("choice probability must lie in (0, 1), got {sigma}"));
    }
    if !(dsigma_drho > 0.0) {
        return domain("demand must increase in pension utility");
    }
    Ok(sigma * (1.0 - sigma) / dsigma_drho)
}

/// Index maximizing `ρ + θ·b`; near-ties go to the contract with the lowest
/// `b`, then to the earliest entry.
pub fn contract_choice(theta: f64, menu: &[(f64, f64)]) -> Result<usize> {
    if menu.is_empty() {
        return domain("contract menu is empty");
    }
    let value = |i: usize| menu[i].0 + theta * menu[i].1;
    let mut best = 0;
    for i in 1..menu.len() {
        let (vi, vb) = (value(i), value(best));
        let tol = 1e-12 * vi.abs().max(vb.abs());
        if vi > vb + tol || ((vi - vb).abs() <= tol && menu[i].1 < menu[best].1) {
            best = i;
        }
    }
    Ok(best)
}

/// Draw `(θ, β)` for one retiree.
pub fn sample_preferences<R: Rng + ?Sized>(
    dist: &BequestPrefDist,
    group: &RiskPrefGroup,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let theta = dist.draw_from_uniform(rng.random::<f64>());
    let normal = Normal::new(group.beta_mean, group.beta_var.sqrt())
        .map_err(|e| Error::Domain(format!("risk preference law: {e}")))?;
    Ok((theta, normal.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist() -> BequestPrefDist {
        BequestPrefDist::truncated_exponential(1, 0.4, 2.784, 20.0, 2000).unwrap()
    }

    #[test]
    fn ninety_distinct_groups_round_trip_through_strings() {
        let all = GroupKey::all();
        assert_eq!(all.len(), 90);
        let set: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(set.len(), 90);
        for k in all {
            assert_eq!(k.to_string().parse::<GroupKey>().unwrap(), k);
        }
    }

    #[test]
    fn age_bins_are_relative_to_statutory_age() {
        assert_eq!(AgeBin::classify(Gender::Male, 65.5 * 12.0), AgeBin::At);
        assert_eq!(AgeBin::classify(Gender::Female, 65.5 * 12.0), AgeBin::After);
        assert_eq!(AgeBin::classify(Gender::Male, 62.0 * 12.0), AgeBin::Before);
    }

    #[test]
    fn calibrated_mean_is_hit() {
        let (mean, _) = dist().moments();
        assert!((mean - 2.784).abs() < 1e-3, "{mean}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = dist();
        for p in [0.45, 0.6, 0.9, 0.999] {
            let t = d.quantile(p);
            assert!((d.cdf(t) - p).abs() < 1e-9);
        }
        assert_eq!(d.quantile(0.3), 0.0);
    }

    #[test]
    fn symmetric_single_option() {
        let p = ri_choice_probs(&[-1.0], -1.0, &[1.0], 0.3).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_alpha_returns_priors() {
        let p = ri_choice_probs(&[-1.0, -2.0], -5.0, &[0.25, 0.75], 1e12).unwrap();
        assert!((p[0] - 0.125).abs() < 1e-9);
        assert!((p[1] - 0.375).abs() < 1e-9);
        assert!((p[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_prior_excludes_option() {
        let p = ri_choice_probs(&[100.0, -1.0], -1.0, &[0.0, 0.5], 0.1).unwrap();
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn invalid_alpha() {
        assert!(ri_choice_probs(&[0.0], 0.0, &[1.0], 0.0).is_err());
        assert!(ri_choice_probs(&[0.0], 0.0, &[1.0], -1.0).is_err());
    }

    #[test]
    fn elasticity_arithmetic() {
        assert!((info_cost_from_elasticity(0.5, 25.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(info_cost_from_elasticity(0.5, 0.0).is_err());
    }

    #[test]
    fn contract_choice_rules() {
        let menu = [(-1.0, 0.0), (-0.8, -0.1), (-0.9, -0.05)];
        assert_eq!(contract_choice(0.0, &menu).unwrap(), 1);
        // Between entries 0 and 1 the threshold is 0.2 / 0.1 = 2.
        assert_eq!(contract_choice(2.0, &menu[..2]).unwrap(), 1);
        assert_eq!(contract_choice(2.5, &menu[..2]).unwrap(), 0);
        assert!(contract_choice(1.0, &[]).is_err());
    }

    #[test]
    fn zeta_one_always_zero() {
        let d = BequestPrefDist::truncated_exponential(2, 1.0, 0.0, 20.0, 100).unwrap();
        let g = RiskPrefGroup { group_key: GroupKey::all()[0], beta_mean: 0.0, beta_var: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(sample_preferences(&d, &g, &mut rng).unwrap().0, 0.0);
        }
    }

    #[test]
    fn info_cost_csv_round_trip() {
        let t = InfoCostTable::reference();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("channel,quintile,alpha\n"));
        assert_eq!(InfoCostTable::read_csv(&buf[..]).unwrap(), t);
        assert_eq!(t.get(Channel::SalesAgent, 1), Some(0.027));
    }

    #[test]
    fn json_schema_fields() {
        let v = serde_json::to_value(dist()).unwrap();
        for k in ["quintile", "zeta", "theta_grid", "theta_cdf"] {
            assert!(v.get(k).is_some());
        }
        let g = RiskPrefGroup { group_key: GroupKey::all()[3], beta_mean: 0.5, beta_var: 0.1 };
        let v = serde_json::to_value(g).unwrap();
        assert_eq!(v["group_key"], "female/at/Q1/afp");
    }
}
