//! Gompertz proportional-hazard mortality.
//!
//! Ages are in months throughout. The hazard at age `t` for a person with
//! covariates `x` is `λ(x)·exp(g·t)` with `λ(x) = exp(xᵀτ)`, which gives the
//! conditional survival
//!
//! ```text
//! S(t | t > t0) = exp(-(λ/g)·(exp(g·t) − exp(g·t0)))
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Number of entries in the linear predictor: intercept, female, married,
/// savings (per 100k), birth cohort (years after 1950).
pub const N_COEFFS: usize = 5;

pub const COEFF_NAMES: [&str; N_COEFFS] = ["intercept", "female", "married", "savings_100k", "cohort_1950"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn other(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector {
    /// Age at retirement in months.
    pub age_at_retirement: f64,
    pub gender: Gender,
    pub married: bool,
    /// Savings in currency units.
    pub savings: f64,
    pub birth_cohort: i32,
}

impl CovariateVector {
    pub fn validate(&self) -> Result<()> {
        if !(self.age_at_retirement > 0.0) {
            return domain(format!("age_at_retirement must be positive, got {}", self.age_at_retirement));
        }
        if !(self.savings >= 0.0) || !self.savings.is_finite() {
            return domain(format!("savings must be non-negative, got {}", self.savings));
        }
        Ok(())
    }

    /// Row of the linear predictor on the reporting scale.
    pub fn design(&self) -> [f64; N_COEFFS] {
        [
            1.0,
            if self.gender == Gender::Female { 1.0 } else { 0.0 },
            if self.married { 1.0 } else { 0.0 },
            self.savings / 100_000.0,
            f64::from(self.birth_cohort - 1950),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GompertzModel {
    /// Gompertz shape `g`, per month.
    pub shape: f64,
    pub coeffs: [f64; N_COEFFS],
}

impl GompertzModel {
    pub fn new(shape: f64, coeffs: [f64; N_COEFFS]) -> Result<Self> {
        let m = GompertzModel { shape, coeffs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0) || !self.shape.is_finite() {
            return domain(format!("Gompertz shape must be positive, got {}", self.shape));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return domain("Gompertz coefficients must be finite");
        }
        Ok(())
    }

    pub fn lambda(&self, x: &CovariateVector) -> f64 {
        let d = x.design();
        d.iter().zip(self.coeffs.iter()).map(|(a, b)| a * b).sum::<f64>().exp()
    }

    pub fn hazard(&self, x: &CovariateVector, t: f64) -> f64 {
        self.lambda(x) * (self.shape * t).exp()
    }
}

/// `S(t | t > t0)` for an explicit `(g, λ)` pair.
pub fn survival_with(shape: f64, lambda: f64, t: f64, t0: f64) -> Result<f64> {
    if !(shape > 0.0) {
        return domain(format!("Gompertz shape must be positive, got {shape}"));
    }
    if !(t0 >= 0.0) || !(t >= t0) {
        return domain(format!("need t >= t0 >= 0, got t = {t}, t0 = {t0}"));
    }
    Ok(survival_unchecked(shape, lambda, t0, t - t0))
}

/// Survival `s` months after `t0`; no argument checks.
#[inline]
pub(crate) fn survival_unchecked(shape: f64, lambda: f64, t0: f64, s: f64) -> f64 {
    let cum = lambda / shape * (shape * t0).exp() * (shape * s).exp_m1();
    (-cum).exp()
}

pub fn conditional_survival(model: &GompertzModel, x: &CovariateVector, t: f64, t0: f64) -> Result<f64> {
    model.validate()?;
    survival_with(model.shape, model.lambda(x), t, t0)
}

/// Death age by inversion of the conditional survival at uniform `u ∈ (0, 1)`.
pub fn sample_death_age(shape: f64, lambda: f64, t0: f64, u: f64) -> f64 {
    let c = lambda / shape * (shape * t0).exp();
    t0 + (-u.ln() / c).ln_1p() / shape
}

/// Median age at death (in years) for someone alive at `t0` months.
pub fn median_expected_life(model: &GompertzModel, x: &CovariateVector, t0: f64) -> Result<f64> {
    model.validate()?;
    if !(t0 >= 0.0) {
        return domain(format!("t0 must be non-negative, got {t0}"));
    }
    let lambda = model.lambda(x);
    let surv = |t: f64| survival_unchecked(model.shape, lambda, t0, t - t0);
    let mut lo = t0;
    let mut step = 1.0;
    let mut hi = t0 + step;
    while surv(hi) > 0.5 {
        lo = hi;
        step *= 2.0;
        hi = t0 + step;
        if step > 1e7 {
            return Err(Error::NonConvergence { iterations: 0, detail: "median not bracketed".into() });
        }
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if surv(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / 12.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityRecord {
    pub id: u64,
    pub covariates: CovariateVector,
    /// Age at entry into observation, months.
    pub entry_age: f64,
    /// Age at death or censoring, months.
    pub exit_age: f64,
    pub died: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct MortalityRow {
    id: u64,
    age_entry_m: f64,
    age_exit_m: f64,
    died: u8,
    gender: Gender,
    married: u8,
    savings: f64,
    cohort: i32,
}

pub fn write_records_csv<W: Write>(records: &[MortalityRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(MortalityRow {
            id: r.id,
            age_entry_m: r.entry_age,
            age_exit_m: r.exit_age,
            died: u8::from(r.died),
            gender: r.covariates.gender,
            married: u8::from(r.covariates.married),
            savings: r.covariates.savings,
            cohort: r.covariates.birth_cohort,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<MortalityRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: MortalityRow = row?;
        if row.age_exit_m < row.age_entry_m {
            return domain(format!("record {}: exit age before entry age", row.id));
        }
        let covariates = CovariateVector {
            age_at_retirement: row.age_entry_m,
            gender: row.gender,
            married: row.married != 0,
            savings: row.savings,
            birth_cohort: row.cohort,
        };
        covariates.validate()?;
        out.push(MortalityRecord {
            id: row.id,
            covariates,
            entry_age: row.age_entry_m,
            exit_age: row.age_exit_m,
            died: row.died != 0,
        });
    }
    Ok(out)
}

/// Fitted model as persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGompertz {
    pub g: f64,
    pub tau: Vec<f64>,
    /// Covariance of `[g, tau...]` from the observed information.
    pub cov: Vec<Vec<f64>>,
    pub loglik: f64,
    #[serde(default)]
    pub iterations: usize,
}

impl FittedGompertz {
    pub fn model(&self) -> Result<GompertzModel> {
        if self.tau.len() != N_COEFFS {
            return domain(format!("expected {N_COEFFS} coefficients, found {}", self.tau.len()));
        }
        let mut coeffs = [0.0; N_COEFFS];
        coeffs.copy_from_slice(&self.tau);
        GompertzModel::new(self.g, coeffs)
    }

    /// Standard errors of `[g, tau...]`.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.cov.len()).map(|i| self.cov[i][i].max(0.0).sqrt()).collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when half the Newton decrement falls below this.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 200, tolerance: 1e-14 }
    }
}

/// Per-record log-likelihood and its derivatives with respect to the linear
/// predictor `eta` and the shape `g`, at shifted ages `s0 <= s1`.
struct RecordTerms {
    value: f64,
    d_eta: f64,
    d_g: f64,
    d_eta_eta: f64,
    d_eta_g: f64,
    d_g_g: f64,
}

#[inline]
fn record_terms(g: f64, eta: f64, s0: f64, s1: f64, died: bool) -> RecordTerms {
    let e0 = (g * s0).exp();
    let e1 = (g * s1).exp();
    let b = e0 * (g * (s1 - s0)).exp_m1();
    let b1 = s1 * e1 - s0 * e0;
    let b2 = s1 * s1 * e1 - s0 * s0 * e0;
    let a = b / g;
    let a1 = b1 / g - a / g;
    let a2 = b2 / g - 2.0 * a1 / g;
    let lam = eta.exp();
    let d = if died { 1.0 } else { 0.0 };
    RecordTerms {
        value: d * (eta + g * s1) - lam * a,
        d_eta: d - lam * a,
        d_g: d * s1 - lam * a1,
        d_eta_eta: -lam * a,
        d_eta_g: -lam * a1,
        d_g_g: -lam * a2,
    }
}

/// Log-likelihood of right-censored records on the reporting scale.
pub fn log_likelihood(model: &GompertzModel, records: &[MortalityRecord]) -> f64 {
    records
        .iter()
        .map(|r| {
            let eta = dot(&r.covariates.design(), &model.coeffs);
            record_terms(model.shape, eta, r.entry_age, r.exit_age, r.died).value
        })
        .sum()
}

/// Gradient of the log-likelihood with respect to `[g, tau...]`.
pub fn score(model: &GompertzModel, records: &[MortalityRecord]) -> Vec<f64> {
    let mut grad = vec![0.0; N_COEFFS + 1];
    for r in records {
        let x = r.covariates.design();
        let t = record_terms(model.shape, dot(&x, &model.coeffs), r.entry_age, r.exit_age, r.died);
        grad[0] += t.d_g;
        for k in 0..N_COEFFS {
            grad[k + 1] += t.d_eta * x[k];
        }
    }
    grad
}

fn dot(a: &[f64; N_COEFFS], b: &[f64; N_COEFFS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Standardized {
    rows: Vec<[f64; N_COEFFS]>,
    means: [f64; N_COEFFS],
    scales: [f64; N_COEFFS],
    t_ref: f64,
}

fn standardize(records: &[MortalityRecord]) -> Result<Standardized> {
    let n = records.len() as f64;
    let raw: Vec<[f64; N_COEFFS]> = records.iter().map(|r| r.covariates.design()).collect();
    let mut means = [0.0; N_COEFFS];
    let mut scales = [1.0; N_COEFFS];
    for k in 1..N_COEFFS {
        let m = raw.iter().map(|x| x[k]).sum::<f64>() / n;
        let v = raw.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n;
        if !(v > 1e-24) {
            return Err(Error::RankDeficient(format!("covariate '{}' is constant", COEFF_NAMES[k])));
        }
        means[k] = m;
        scales[k] = v.sqrt();
    }
    let rows = raw
        .iter()
        .map(|x| {
            let mut z = [1.0; N_COEFFS];
            for k in 1..N_COEFFS {
                z[k] = (x[k] - means[k]) / scales[k];
            }
            z
        })
        .collect();
    let t_ref = records.iter().map(|r| r.entry_age).sum::<f64>() / n;
    Ok(Standardized { rows, means, scales, t_ref })
}

/// Value, gradient and Hessian in the standardized parameterization
/// `[g, tau'_0, ..., tau'_4]`.
fn standardized_objective(
    params: &DVector<f64>,
    st: &Standardized,
    records: &[MortalityRecord],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = N_COEFFS + 1;
    let g = params[0];
    let mut value = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for (z, r) in st.rows.iter().zip(records) {
        let eta: f64 = (0..N_COEFFS).map(|k| z[k] * params[k + 1]).sum();
        let t = record_terms(g, eta, r.entry_age - st.t_ref, r.exit_age - st.t_ref, r.died);
        value += t.value;
        grad[0] += t.d_g;
        hess[(0, 0)] += t.d_g_g;
        for k in 0..N_COEFFS {
            grad[k + 1] += t.d_eta * z[k];
            hess[(0, k + 1)] += t.d_eta_g * z[k];
            for l in k..N_COEFFS {
                hess[(k + 1, l + 1)] += t.d_eta_eta * z[k] * z[l];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            hess[(i, j)] = hess[(j, i)];
        }
    }
    (value, grad, hess)
}

fn standardized_value(params: &DVector<f64>, st: &Standardized, records: &[MortalityRecord]) -> f64 {
    let g = params[0];
    st.rows
        .iter()
        .zip(records)
        .map(|(z, r)| {
            let eta: f64 = (0..N_COEFFS).map(|k| z[k] * params[k + 1]).sum();
            record_terms(g, eta, r.entry_age - st.t_ref, r.exit_age - st.t_ref, r.died).value
        })
        .sum()
}

/// Jacobian of the reporting-scale parameters with respect to the standardized ones.
fn reporting_jacobian(st: &Standardized) -> DMatrix<f64> {
    let p = N_COEFFS + 1;
    let mut j = DMatrix::zeros(p, p);
    j[(0, 0)] = 1.0;
    j[(1, 0)] = -st.t_ref;
    j[(1, 1)] = 1.0;
    for k in 1..N_COEFFS {
        j[(1, k + 1)] = -st.means[k] / st.scales[k];
        j[(k + 1, k + 1)] = 1.0 / st.scales[k];
    }
    j
}

/// Maximum-likelihood fit by damped Newton on standardized covariates.
pub fn fit_gompertz(records: &[MortalityRecord], opts: FitOptions) -> Result<FittedGompertz> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no mortality records".into()));
    }
    for r in records {
        if r.exit_age < r.entry_age {
            return domain(format!("record {}: exit age before entry age", r.id));
        }
    }
    let deaths = records.iter().filter(|r| r.died).count();
    if deaths == 0 {
        return Err(Error::NoEvents);
    }
    let st = standardize(records)?;

    // Start from a typical adult shape and the intercept that matches the death count.
    let g0 = 0.008;
    let exposure: f64 = records
        .iter()
        .map(|r| {
            let (s0, s1) = (r.entry_age - st.t_ref, r.exit_age - st.t_ref);
            (g0 * s0).exp() * (g0 * (s1 - s0)).exp_m1() / g0
        })
        .sum();
    let mut params = DVector::zeros(N_COEFFS + 1);
    params[0] = g0;
    params[1] = (deaths as f64 / exposure).ln();

    let mut iterations = 0;
    let mut converged = false;
    let (mut value, mut grad, mut hess) = standardized_objective(&params, &st, records);
    while iterations < opts.max_iterations {
        iterations += 1;
        let neg_h = -hess.clone();
        let (direction, newton) = match neg_h.clone().cholesky() {
            Some(ch) => (ch.solve(&grad), true),
            None => {
                // Shift the curvature until it is positive definite (Levenberg).
                let scale = (0..neg_h.nrows()).map(|i| neg_h[(i, i)].abs()).fold(1e-12, f64::max);
                let mut mu = 1e-8 * scale;
                loop {
                    let shifted = &neg_h + DMatrix::identity(neg_h.nrows(), neg_h.ncols()) * mu;
                    if let Some(ch) = shifted.cholesky() {
                        break (ch.solve(&grad), false);
                    }
                    mu *= 10.0;
                }
            }
        };
        let decrement = 0.5 * grad.dot(&direction);
        if newton && decrement < opts.tolerance {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &params + &direction * step;
            if trial[0] > 0.0 {
                let v = standardized_value(&trial, &st, records);
                if v.is_finite() && v > value {
                    params = trial;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        let (v, gr, h) = standardized_objective(&params, &st, records);
        if !accepted {
            // No ascent possible along the direction: at the optimum up to rounding.
            value = v;
            grad = gr;
            hess = h;
            converged = newton;
            break;
        }
        value = v;
        grad = gr;
        hess = h;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            detail: format!("gradient norm {:.3e}", grad.norm()),
        });
    }

    let info = -hess;
    let cov_std = info
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::RankDeficient("observed information is singular".into()))?;
    let jac = reporting_jacobian(&st);
    let reporting = &jac * &params;
    let cov = &jac * cov_std * jac.transpose();

    let p = N_COEFFS + 1;
    Ok(FittedGompertz {
        g: reporting[0],
        tau: (1..p).map(|i| reporting[i]).collect(),
        cov: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        loglik: value,
        iterations,
    })
}
