//! Density deconvolution by characteristic-function division.

use serde::{Deserialize, Serialize};

use super::kde::{empirical_cdf, silverman_bandwidth, Kde};
use crate::error::{Error, Result};

/// Law of the additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLaw {
    Degenerate,
    Normal { sd: f64 },
    /// Atoms `(value, probability)`.
    Discrete { atoms: Vec<(f64, f64)> },
}

impl NoiseLaw {
    /// Characteristic function at frequency `s` as `(re, im)`.
    pub fn cf(&self, s: f64) -> (f64, f64) {
        match self {
            NoiseLaw::Degenerate => (1.0, 0.0),
            NoiseLaw::Normal { sd } => ((-0.5 * (sd * s).powi(2)).exp(), 0.0),
            NoiseLaw::Discrete { atoms } => atoms
                .iter()
                .fold((0.0, 0.0), |(re, im), (v, p)| (re + p * (s * v).cos(), im + p * (s * v).sin())),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::Normal { sd } if !(*sd >= 0.0) => Err(Error::Domain("noise sd must be non-negative".into())),
            NoiseLaw::Discrete { atoms } if (atoms.iter().map(|a| a.1).sum::<f64>() - 1.0).abs() > 1e-9 => {
                Err(Error::Domain("noise atoms must sum to one".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deconvolved {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub bandwidth: f64,
    /// The bandwidth was widened to keep the noise transform away from zero.
    pub widened: bool,
}

impl Deconvolved {
    pub fn cdf_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let i = g.partition_point(|v| *v <= x);
        let w = (x - g[i - 1]) / (g[i] - g[i - 1]);
        self.cdf[i - 1] + w * (self.cdf[i] - self.cdf[i - 1])
    }
}

/// Default smallest noise transform modulus allowed on the frequency band.
pub const CF_FLOOR: f64 = 0.03;
const FREQUENCIES: usize = 512;

/// Flat-top kernel transform: one on `[−½, ½]`, tapering linearly to zero at ±1.
fn kernel_ft(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.5 {
        1.0
    } else if a < 1.0 {
        2.0 * (1.0 - a)
    } else {
        0.0
    }
}

/// Estimates the law of `X` from draws of `X + ε` with `ε` from `noise`.
pub fn deconvolve(samples: &[f64], noise: &NoiseLaw, grid_points: usize) -> Result<Deconvolved> {
    deconvolve_with_floor(samples, noise, grid_points, CF_FLOOR)
}

pub fn deconvolve_with_floor(samples: &[f64], noise: &NoiseLaw, grid_points: usize, cf_floor: f64) -> Result<Deconvolved> {
    noise.validate()?;
    if samples.len() < 2 || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData("deconvolution needs at least two finite draws".into()));
    }
    let n = grid_points.max(2);
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let h0 = silverman_bandwidth(samples).max(1e-12 * (1.0 + hi.abs().max(lo.abs())));

    let trivial = match noise {
        NoiseLaw::Degenerate => true,
        NoiseLaw::Normal { sd } => *sd == 0.0,
        NoiseLaw::Discrete { atoms } => atoms.iter().all(|(v, p)| *v == 0.0 || *p == 0.0),
    };
    if trivial {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let kde = Kde::with_bandwidth(samples, h0)?;
        let density = grid.iter().map(|x| kde.pdf(*x)).collect();
        let cdf = grid.iter().map(|x| empirical_cdf(&sorted, *x)).collect();
        return Ok(Deconvolved { grid, density, cdf, bandwidth: h0, widened: false });
    }

    let modulus = |s: f64| {
        let (re, im) = noise.cf(s);
        (re * re + im * im).sqrt()
    };
    let band_ok = |h: f64| (0..=200).all(|k| modulus(k as f64 / 200.0 / h) >= cf_floor);
    let mut h = h0;
    let mut widened = false;
    while !band_ok(h) {
        h *= 1.25;
        widened = true;
        if h > 1e6 * h0 {
            return Err(Error::Infeasible("noise transform vanishes near zero frequency".into()));
        }
    }

    let smax = 1.0 / h;
    let ds = smax / FREQUENCIES as f64;
    let nf = samples.len() as f64;
    // Ratio of empirical to noise transforms, damped by the kernel, at midpoints.
    let ratios: Vec<(f64, f64, f64)> = (0..FREQUENCIES)
        .map(|k| {
            let s = (k as f64 + 0.5) * ds;
            let (mut re, mut im) = (0.0, 0.0);
            for x in samples {
                re += (s * x).cos();
                im += (s * x).sin();
            }
            let (re, im) = (re / nf, im / nf);
            let (nr, ni) = noise.cf(s);
            let d = nr * nr + ni * ni;
            let w = kernel_ft(s * h);
            (s, w * (re * nr + im * ni) / d, w * (im * nr - re * ni) / d)
        })
        .collect();

    let pad = 4.0 * h;
    let (a, b) = (lo - pad, hi + pad);
    let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|x| {
            let v: f64 = ratios.iter().map(|(s, re, im)| re * (s * x).cos() + im * (s * x).sin()).sum();
            (v * ds / std::f64::consts::PI).max(0.0)
        })
        .collect();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    }
    let total = cdf[n - 1];
    if !(total > 0.0) {
        return Err(Error::Infeasible("deconvolved density has no mass".into()));
    }
    let density = density.iter().map(|d| d / total).collect();
    let cdf = cdf.iter().map(|c| c / total).collect();
    Ok(Deconvolved { grid, density, cdf, bandwidth: h, widened })
}
