//! Conditional logit by penalized Newton–Raphson.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observed choice among alternatives described by feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    pub alts: Vec<Vec<f64>>,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub coef: Vec<f64>,
    /// Inverse penalized Hessian on the original feature scale.
    pub cov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Standardized coefficients grew without bound: the data nearly separate.
    pub separated: bool,
}

impl LogitFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|k| self.cov[k][k].max(0.0).sqrt()).collect()
    }

    /// Choice probabilities within one set.
    pub fn probabilities(&self, alts: &[Vec<f64>]) -> Vec<f64> {
        softmax(alts.iter().map(|a| dot(a, &self.coef)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Fits `P(k) ∝ exp(x_k·c)`. Features are rescaled to unit spread before
/// fitting and `ridge[k]` penalizes `c_k²/2` on that scale.
pub fn fit_conditional_logit(sets: &[ChoiceSet], ridge: &[f64]) -> Result<LogitFit> {
    let k = ridge.len();
    if sets.is_empty() {
        return Err(Error::InsufficientData("no choice sets".into()));
    }
    for s in sets {
        if s.chosen >= s.alts.len() || s.alts.iter().any(|a| a.len() != k || a.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("malformed choice set".into()));
        }
    }
    // Within-set spread of each feature; constant columns keep scale one.
    let mut scale = vec![0.0; k];
    let mut count = 0.0;
    for s in sets {
        let n = s.alts.len() as f64;
        for j in 0..k {
            let m = s.alts.iter().map(|a| a[j]).sum::<f64>() / n;
            scale[j] += s.alts.iter().map(|a| (a[j] - m).powi(2)).sum::<f64>();
        }
        count += n;
    }
    let scale: Vec<f64> = scale.iter().map(|v| if *v > 0.0 { (v / count).sqrt() } else { 1.0 }).collect();
    let scaled: Vec<Vec<Vec<f64>>> =
        sets.iter().map(|s| s.alts.iter().map(|a| a.iter().zip(&scale).map(|(x, c)| x / c).collect()).collect()).collect();

    let objective = |c: &[f64]| -> f64 {
        let mut ll = 0.0;
        for (s, alts) in sets.iter().zip(&scaled) {
            let v: Vec<f64> = alts.iter().map(|a| dot(a, c)).collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ll += v[s.chosen] - m - v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        }
        ll - 0.5 * c.iter().zip(ridge).map(|(x, r)| r * x * x).sum::<f64>()
    };
    let derivs = |c: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for (s, alts) in sets.iter().zip(&scaled) {
            let p = softmax(alts.iter().map(|a| dot(a, c)));
            let mut mean = vec![0.0; k];
            for (a, pa) in alts.iter().zip(&p) {
                for j in 0..k {
                    mean[j] += pa * a[j];
                }
            }
            for j in 0..k {
                g[j] += alts[s.chosen][j] - mean[j];
            }
            for (a, pa) in alts.iter().zip(&p) {
                for i in 0..k {
                    let di = a[i] - mean[i];
                    for j in 0..=i {
                        h[(i, j)] += pa * di * (a[j] - mean[j]);
                    }
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
            g[i] -= ridge[i] * c[i];
            h[(i, i)] += ridge[i];
        }
        (g, h)
    };

    let mut c = vec![0.0; k];
    let mut f = objective(&c);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=200 {
        iterations = it;
        let (g, h) = derivs(&c);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                let mut hr = h.clone();
                for i in 0..k {
                    hr[(i, i)] += 1e-8 * (1.0 + h[(i, i)]);
                }
                hr.lu().solve(&g).unwrap_or_else(|| g.clone())
            }
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let ft = objective(&trial);
            if ft.is_finite() && ft >= f - 1e-12 * f.abs() {
                c = trial;
                improved = ft - f > 1e-12 * (1.0 + f.abs());
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if g.amax() < 1e-8 * (1.0 + f.abs()) || !improved {
            converged = g.amax() < 1e-5 * (1.0 + f.abs());
            break;
        }
        if c.iter().any(|x| x.abs() > 1e3) {
            break;
        }
    }
    // Every choice fitted with near certainty: the likelihood keeps rising along a ray.
    let worst = sets
        .iter()
        .zip(&scaled)
        .map(|(s, alts)| softmax(alts.iter().map(|a| dot(a, &c)))[s.chosen])
        .fold(1.0, f64::min);
    let separated = worst > 1.0 - 1e-6;
    let (_, h) = derivs(&c);
    let inv = h.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let coef: Vec<f64> = c.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let cov = (0..k).map(|i| (0..k).map(|j| inv[(i, j)] / (scale[i] * scale[j])).collect()).collect();
    Ok(LogitFit { coef, cov, loglik: f, iterations, converged, separated })
}
