mod common;

use annuity_market::valuation::{life_factors, CrraParams};
use common::*;

#[test]
fn quadrature_agrees_with_simulated_death_times() {
    let crra = CrraParams::default();
    let r = reference_retiree();
    let s = reference_spouse();
    for (i, c) in contract_grid().into_iter().enumerate() {
        let sp = c.spouse_covered.then_some(&s);
        let f = life_factors(&r, sp, &c, &crra).unwrap();
        let mc = mc_life_factors(&r, sp, &c, crra.delta, 400_000, 11 + i as u64);
        let q = [f.d_r, f.d_r_dp, f.g_f, f.s_f];
        for k in 0..4 {
            assert!(rel_err(q[k], mc[k]) < 0.01, "contract {c:?} factor {k}: {} vs {}", q[k], mc[k]);
        }
    }
}
