//! Bequest-weight distribution from contract choices at observed price gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::AuctionTranscript;
use crate::preferences::BequestPrefDist;
use crate::valuation::{bequest_utility, pension_utility, CrraParams};

/// One binary event `θ <= t`: `low` is true when the event occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientObservation {
    pub retiree_id: u64,
    pub quintile: u8,
    pub t: f64,
    pub low: bool,
}

/// Per-contract `(ρ, b)` at the best first-round offer.
pub fn contract_menu(tr: &AuctionTranscript, crra: &CrraParams) -> Result<Vec<(f64, f64)>> {
    (0..tr.contracts.len())
        .map(|c| {
            let p = tr
                .offers
                .iter()
                .map(|row| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((pension_utility(p, &tr.factors[c], crra)?, bequest_utility(p, &tr.factors[c], crra)?))
        })
        .collect()
}

/// Events from one retiree's contract choice.
///
/// The lowest-`b` contract is chosen iff `θ <= min_c t_c`; the highest-`b`
/// contract is passed over iff `θ < max_c t_c`, with `t_c` the gradient
/// `−Δρ/Δb` against that contract. Menus with fewer than three contracts
/// give a single event.
pub fn gradient_events(tr: &AuctionTranscript, crra: &CrraParams) -> Result<Vec<GradientObservation>> {
    let Some(chosen) = tr.chosen_contract else { return Ok(Vec::new()) };
    if tr.offers.is_empty() || tr.contracts.len() < 2 {
        return Ok(Vec::new());
    }
    let menu = contract_menu(tr, crra)?;
    let mut order: Vec<usize> = (0..menu.len()).collect();
    order.sort_by(|a, b| menu[*a].1.total_cmp(&menu[*b].1).then(a.cmp(b)));
    let lo = order[0];
    let hi = order[order.len() - 1];
    if !(menu[hi].1 > menu[lo].1) {
        return Ok(Vec::new());
    }
    let grad = |x: usize, y: usize| (menu[x].0 - menu[y].0) / (menu[y].1 - menu[x].1);
    let mut out = Vec::new();
    let t_low = order[1..].iter().map(|&c| grad(lo, c)).fold(f64::INFINITY, f64::min);
    out.push(GradientObservation { retiree_id: tr.retiree_id, quintile: tr.quintile, t: t_low, low: chosen == lo });
    if menu.len() >= 3 {
        let t_high = order[..order.len() - 1].iter().map(|&c| grad(c, hi)).fold(f64::NEG_INFINITY, f64::max);
        out.push(GradientObservation { retiree_id: tr.retiree_id, quintile: tr.quintile, t: t_high, low: chosen != hi });
    }
    Ok(out.into_iter().filter(|o| o.t.is_finite() && o.t > 0.0).collect())
}

pub fn gradient_observations(transcripts: &[AuctionTranscript], crra: &CrraParams) -> Result<Vec<GradientObservation>> {
    let mut out = Vec::new();
    for tr in transcripts {
        out.extend(gradient_events(tr, crra)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BequestOptions {
    pub theta_max: f64,
    pub grid_points: usize,
    /// Points at which the local fit is evaluated.
    pub fit_points: usize,
    /// Multiplier on the rule-of-thumb bandwidth in log-gradient space.
    pub bandwidth_scale: f64,
    /// Share of the smallest gradients used for the intercept at zero.
    pub zeta_share: f64,
    /// Smallest gradient above which the intercept counts as extrapolated.
    pub support_gap: f64,
}

impl Default for BequestOptions {
    fn default() -> Self {
        BequestOptions {
            theta_max: 20.0,
            grid_points: 401,
            fit_points: 120,
            bandwidth_scale: 1.0,
            zeta_share: 0.1,
            support_gap: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    #[serde(with = "crate::serde_nan")]
    pub zeta: f64,
    #[serde(with = "crate::serde_nan")]
    pub se: f64,
    pub n: usize,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BequestEstimate {
    pub dist: BequestPrefDist,
    pub zeta: ZetaEstimate,
    pub n_obs: usize,
    /// Smoothed `F(t)` before isotonic projection, as `(t, F)`.
    pub smoothed: Vec<(f64, f64)>,
}

/// Intercept of a straight-line fit of the event indicator on `t` over the
/// smallest gradients.
pub fn estimate_zeta(obs: &[GradientObservation], share: f64, support_gap: f64) -> Result<ZetaEstimate> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no gradient observations".into()));
    }
    let mut pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.t, if o.low { 1.0 } else { 0.0 })).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = ((share * pts.len() as f64).ceil() as usize).clamp(pts.len().min(20), pts.len());
    let low = &pts[..n];
    let nf = n as f64;
    let mt = low.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = low.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = low.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = low.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mt;
    let resid: f64 = low.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let s2 = resid / (nf - 2.0).max(1.0);
    let se = (s2 * (1.0 / nf + if sxx > 0.0 { mt * mt / sxx } else { 0.0 })).sqrt();
    Ok(ZetaEstimate { zeta: icpt.clamp(0.0, 1.0), se, n, extrapolated: pts[0].0 > support_gap })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Local-linear logistic fit at `u0` with Gaussian weights; returns the
/// fitted probability and the total kernel weight.
fn local_logistic(u: &[f64], y: &[f64], u0: f64, h: f64) -> (f64, f64) {
    let lo = u.partition_point(|v| *v < u0 - 6.0 * h);
    let hi = u.partition_point(|v| *v <= u0 + 6.0 * h);
    let w: Vec<f64> = u[lo..hi].iter().map(|v| (-0.5 * ((v - u0) / h).powi(2)).exp()).collect();
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return (f64::NAN, 0.0);
    }
    let ybar = (w.iter().zip(&y[lo..hi]).map(|(a, b)| a * b).sum::<f64>() / sw).clamp(1e-4, 1.0 - 1e-4);
    let (mut a, mut b) = ((ybar / (1.0 - ybar)).ln(), 0.0);
    for _ in 0..50 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((wi, ui), yi) in w.iter().zip(&u[lo..hi]).zip(&y[lo..hi]) {
            let x = (ui - u0) / h;
            let p = sigmoid(a + b * x);
            let r = wi * (yi - p);
            let v = wi * p * (1.0 - p);
            g0 += r;
            g1 += r * x;
            h00 += v;
            h01 += v * x;
            h11 += v * x * x;
        }
        // Light ridge keeps the slope finite in flat regions.
        h11 += 1e-6 * sw;
        g1 -= 1e-6 * sw * b;
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a = (a + da).clamp(-30.0, 30.0);
        b = (b + db).clamp(-100.0, 100.0);
        if da.abs() + db.abs() < 1e-10 {
            break;
        }
    }
    (sigmoid(a), sw)
}

/// Weighted pool-adjacent-violators projection onto non-decreasing sequences.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (v, w) in values.iter().zip(weights) {
        let w = w.max(1e-12);
        blocks.push((*v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().expect("len > 1");
            let (v1, w1, n1) = blocks.pop().expect("len > 0");
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Smoothed, monotone `F` for one quintile with `ζ` from the smallest gradients.
pub fn estimate_bequest_dist(obs: &[GradientObservation], quintile: u8, opts: &BequestOptions) -> Result<BequestEstimate> {
    if obs.len() < 20 {
        return Err(Error::InsufficientData(format!("Q{quintile}: {} gradient observations", obs.len())));
    }
    let zeta = estimate_zeta(obs, opts.zeta_share, opts.support_gap)?;
    let mut pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.t.ln(), if o.low { 1.0 } else { 0.0 })).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let u: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let h = opts.bandwidth_scale * super::kde::silverman_bandwidth(&u).max(1e-3);
    let u_lo = u[0];
    let u_hi = opts.theta_max.ln().min(u[u.len() - 1]);
    let k = opts.fit_points.max(2);
    let mut ts = Vec::with_capacity(k);
    let mut fs = Vec::with_capacity(k);
    let mut ws = Vec::with_capacity(k);
    for i in 0..k {
        let u0 = u_lo + (u_hi - u_lo) * i as f64 / (k - 1) as f64;
        let (f, w) = local_logistic(&u, &y, u0, h);
        if f.is_finite() {
            ts.push(u0.exp());
            fs.push(f);
            ws.push(w);
        }
    }
    let smoothed: Vec<(f64, f64)> = ts.iter().copied().zip(fs.iter().copied()).collect();
    let z = zeta.zeta;
    let cont: Vec<f64> =
        fs.iter().map(|f| if z < 1.0 { ((f - z) / (1.0 - z)).clamp(0.0, 1.0) } else { 0.0 }).collect();
    let mono = pava(&cont, &ws);

    // Tabulate on [0, θ̄]: linear from the origin to the first fitted point,
    // linear between fitted points, then up to one at θ̄.
    let theta_max = opts.theta_max;
    let mut knots: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    knots.extend(ts.iter().copied().zip(mono.iter().copied()).filter(|(t, _)| *t < theta_max));
    knots.push((theta_max, 1.0));
    let n = opts.grid_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| theta_max * i as f64 / (n - 1) as f64).collect();
    let mut cdf: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let j = knots.partition_point(|p| p.0 <= t).clamp(1, knots.len() - 1);
            let (t0, f0) = knots[j - 1];
            let (t1, f1) = knots[j];
            if t1 > t0 { f0 + (f1 - f0) * (t - t0) / (t1 - t0) } else { f1 }
        })
        .collect();
    cdf[0] = 0.0;
    cdf[n - 1] = 1.0;
    for i in 1..n {
        cdf[i] = cdf[i].max(cdf[i - 1]).min(1.0);
    }
    let dist = BequestPrefDist::new(quintile, z, grid, cdf)?;
    Ok(BequestEstimate { dist, zeta, n_obs: obs.len(), smoothed })
}
