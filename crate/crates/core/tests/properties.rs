mod common;

use annuity_market::counterfactual::{english_pension, full_info_pension};
use annuity_market::estimation::bequest::pava;
use annuity_market::estimation::{order_stat_invert, second_highest_cdf};
use annuity_market::market::cost::CostLaw;
use annuity_market::market::{bargain_closed_form, BargainContext, Bidder};
use annuity_market::preferences::ri_choice_probs;
use annuity_market::valuation::{invert_pension, life_factors, total_utility, CrraParams, Lifetime, LifeFactors};
use approx::assert_relative_eq;
use common::{contract_grid, reference_retiree, reference_spouse};
use proptest::prelude::*;

fn factors(i: usize) -> LifeFactors {
    let c = contract_grid()[i];
    let s = reference_spouse();
    life_factors(&reference_retiree(), c.spouse_covered.then_some(&s), &c, &CrraParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pension_inversion_round_trips(p in 10.0f64..20_000.0, theta in 0.0f64..30.0, i in 0usize..18) {
        let crra = CrraParams::default();
        let f = factors(i);
        let back = invert_pension(total_utility(p, theta, &f, &crra).unwrap(), theta, &f, &crra).unwrap();
        assert_relative_eq!(back, p, max_relative = 1e-10);
    }

    #[test]
    fn utility_increases_in_pension(p in 10.0f64..10_000.0, dp in 0.01f64..100.0, theta in 0.0f64..30.0, i in 0usize..18) {
        let crra = CrraParams::default();
        let f = factors(i);
        prop_assert!(total_utility(p + dp, theta, &f, &crra).unwrap() > total_utility(p, theta, &f, &crra).unwrap());
    }

    #[test]
    fn survival_is_a_decreasing_probability(
        shape in 0.005f64..0.015,
        log_lambda in -16.0f64..-10.0,
        t0 in 600.0f64..900.0,
        s in 0.0f64..400.0,
        ds in 0.1f64..50.0,
    ) {
        let l = Lifetime { shape, lambda: log_lambda.exp(), t0 };
        let (a, b) = (l.survival(s), l.survival(s + ds));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
        prop_assert_eq!(l.survival(0.0), 1.0);
    }

    #[test]
    fn order_statistic_inversion_round_trips(f in 0.0f64..=1.0, j in 2usize..30) {
        let g = second_highest_cdf(f, j);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
        let back = order_stat_invert(g.min(1.0), j).unwrap();
        // The map is flat near zero, so compare in CDF space there.
        prop_assert!((second_highest_cdf(back, j) - g).abs() < 1e-9);
    }

    #[test]
    fn cost_law_quantile_inverts_cdf(p in 0.0f64..0.5, u in 0.0f64..=1.0, q in 1u8..=5) {
        let law = CostLaw::calibrated(q, p, 0.8, 2.0, 401).unwrap();
        let r = law.quantile(u);
        prop_assert!(r >= law.r_low() && r <= law.r_high());
        prop_assert!((law.cdf(r) - u).abs() < 1e-9);
    }

    #[test]
    fn pava_is_monotone_and_preserves_weighted_mean(
        pts in prop::collection::vec((-100.0f64..100.0, 0.1f64..10.0), 1..60)
    ) {
        let (v, w): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let fit = pava(&v, &w);
        prop_assert_eq!(fit.len(), v.len());
        prop_assert!(fit.windows(2).all(|x| x[0] <= x[1] + 1e-12));
        let mean = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        assert_relative_eq!(mean(&fit), mean(&v), epsilon = 1e-8, max_relative = 1e-10);
    }

    #[test]
    fn choice_probabilities_form_a_distribution(
        opts in prop::collection::vec((-50.0f64..0.0, 0.01f64..1.0), 1..15),
        eu in -50.0f64..0.0,
        alpha in 0.01f64..100.0,
    ) {
        let (u, raw): (Vec<f64>, Vec<f64>) = opts.into_iter().unzip();
        let total: f64 = raw.iter().sum::<f64>() * 1.25;
        let priors: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let probs = ri_choice_probs(&u, eu, &priors, alpha).unwrap();
        prop_assert_eq!(probs.len(), u.len() + 1);
        prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bargained_pension_stays_within_winner_break_even(
        costs in prop::collection::vec((0.8f64..2.0, 1u8..=3, 2.0f64..3.0), 2..15),
        theta in 0.0f64..5.0,
        beta_share in 0.0f64..0.05,
        i in 0usize..18,
    ) {
        let crra = CrraParams::default();
        let f = factors(i);
        let savings = 75_000.0;
        let scale = (crra.u(savings / f.unc_i) * f.utility_weight(theta, &crra)).abs();
        let bidders: Vec<Bidder> = costs
            .iter()
            .enumerate()
            .map(|(id, (r, rating, div))| {
                let p_max = savings / (r * f.unc_i);
                Bidder { id: id as u32, rating: *rating, p_max, floor: p_max / div }
            })
            .collect();
        let ctx = BargainContext { theta, beta: beta_share * scale, factors: &f, crra: &crra };
        let out = bargain_closed_form(&bidders, &ctx).unwrap();
        let w = bidders[out.winner];
        prop_assert!(out.pension <= w.p_max * (1.0 + 1e-9));
        prop_assert!(out.pension >= w.floor * (1.0 - 1e-9));
    }

    #[test]
    fn full_information_pension_dominates_english(j in 2usize..16, seed in 0u64..1_000, q in 1u8..=5) {
        let law = CostLaw::default_for_quintile(q);
        let full = full_info_pension(80_000.0, 150.0, &law, j, 50, seed).unwrap();
        let eng = english_pension(80_000.0, 150.0, &law, j, 50, seed).unwrap();
        prop_assert!(full.draws.iter().zip(&eng.draws).all(|(a, b)| a >= b));
        prop_assert!(full.mean >= eng.mean);
    }
}
