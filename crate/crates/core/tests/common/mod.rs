#![allow(dead_code)]

use annuity_market::lifetables::sample_death_age;
use annuity_market::valuation::{ContractSpec, Lifetime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discounted length of `[a, b]` under continuous rate `delta`; zero if empty.
fn disc(a: f64, b: f64, delta: f64) -> f64 {
    if b <= a {
        0.0
    } else {
        ((-delta * a).exp() - (-delta * b).exp()) / delta
    }
}

/// Monte Carlo life factors `[D_R, D_R_DP, G_F, S_F]` from simulated death times.
pub fn mc_life_factors(
    retiree: &Lifetime,
    spouse: Option<&Lifetime>,
    contract: &ContractSpec,
    delta: f64,
    n: usize,
    seed: u64,
) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64)> = (0..n).map(|_| (1.0 - rng.random::<f64>(), 1.0 - rng.random::<f64>())).collect();
    average_factors(retiree, spouse, contract, delta, &draws)
}

/// Same, with Latin hypercube uniforms: one draw per stratum of width `1/n`
/// for each life, strata paired by a random permutation.
pub fn mc_life_factors_stratified(
    retiree: &Lifetime,
    spouse: Option<&Lifetime>,
    contract: &ContractSpec,
    delta: f64,
    n: usize,
    seed: u64,
) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let draws: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let u = 1.0 - (i as f64 + rng.random::<f64>()) / n as f64;
            let v = 1.0 - (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            (u.max(f64::MIN_POSITIVE), v.max(f64::MIN_POSITIVE))
        })
        .collect();
    average_factors(retiree, spouse, contract, delta, &draws)
}

fn average_factors(retiree: &Lifetime, spouse: Option<&Lifetime>, contract: &ContractSpec, delta: f64, draws: &[(f64, f64)]) -> [f64; 4] {
    let (d, end_g) = (contract.deferral, contract.deferral + contract.guarantee);
    let mut acc = [0.0; 4];
    for &(u, v) in draws {
        let tau = sample_death_age(retiree.shape, retiree.lambda, retiree.t0, u) - retiree.t0;
        acc[0] += disc(d, tau, delta);
        acc[1] += disc(0.0, tau.min(d), delta);
        acc[2] += disc(tau.max(d), end_g, delta);
        if let Some(sp) = spouse {
            let tau_sp = sample_death_age(sp.shape, sp.lambda, sp.t0, v) - sp.t0;
            acc[3] += disc(tau.max(end_g), tau_sp, delta);
        }
    }
    acc.map(|a| a / draws.len() as f64)
}

/// The 3×3×2 grid of (deferral, guarantee, married) contracts.
pub fn contract_grid() -> Vec<ContractSpec> {
    let mut out = Vec::new();
    for d in [0.0, 12.0, 36.0] {
        for g in [0.0, 120.0, 240.0] {
            for married in [false, true] {
                out.push(ContractSpec::new(d, g, married));
            }
        }
    }
    out
}

pub fn reference_retiree() -> Lifetime {
    Lifetime { shape: 0.0085, lambda: (-13.78f64).exp(), t0: 780.0 }
}

pub fn reference_spouse() -> Lifetime {
    Lifetime { shape: 0.0085, lambda: (-14.88f64).exp(), t0: 744.0 }
}

/// Relative agreement; two factors that are both zero count as a match.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
