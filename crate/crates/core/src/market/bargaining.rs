//! Second-round bargaining: the closed-form limit and the explicit ε-game.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::valuation::{invert_pension, CrraParams, LifeFactors};

/// A firm in the bargaining round for one contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub id: u32,
    pub rating: u8,
    /// Break-even pension.
    pub p_max: f64,
    /// First-round offer; second-round offers cannot go below it.
    pub floor: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BargainContext<'a> {
    pub theta: f64,
    pub beta: f64,
    pub factors: &'a LifeFactors,
    pub crra: &'a CrraParams,
}

impl BargainContext<'_> {
    fn weight(&self) -> f64 {
        self.factors.utility_weight(self.theta, self.crra)
    }

    /// `β·Z + ρ(P) + θ·b(P)`.
    pub fn value(&self, rating: u8, p: f64) -> f64 {
        self.beta * f64::from(rating) + self.crra.u(p) * self.weight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BargainOutcome {
    /// Index of the winner in the bidder slice.
    pub winner: usize,
    pub runner_up: Option<usize>,
    pub pension: f64,
    /// True when the winner's first-round offer exceeds the competitive pension.
    pub floor_binding: bool,
}

fn validate(bidders: &[Bidder]) -> Result<()> {
    if bidders.is_empty() {
        return domain("bargaining needs at least one bidder");
    }
    for b in bidders {
        if !(b.p_max > 0.0 && b.floor > 0.0 && b.floor <= b.p_max * (1.0 + 1e-12)) {
            return domain(format!("bidder {} needs 0 < floor <= P_max", b.id));
        }
    }
    Ok(())
}

/// Better of two `(value, id)` pairs: higher value, then lower id.
fn beats(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn argmax_excluding(values: &[f64], bidders: &[Bidder], skip: Option<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..bidders.len() {
        if Some(j) == skip {
            continue;
        }
        if best.is_none_or(|b| beats((values[j], bidders[j].id), (values[b], bidders[b].id))) {
            best = Some(j);
        }
    }
    best
}

/// Winner maximizes utility at break-even offers; its pension leaves the
/// retiree indifferent to the runner-up's best offer.
pub fn bargain_closed_form(bidders: &[Bidder], ctx: &BargainContext) -> Result<BargainOutcome> {
    validate(bidders)?;
    let at_max: Vec<f64> = bidders.iter().map(|b| ctx.value(b.rating, b.p_max)).collect();
    let winner = argmax_excluding(&at_max, bidders, None).expect("non-empty");
    let w = bidders[winner];
    let Some(runner_up) = argmax_excluding(&at_max, bidders, Some(winner)) else {
        return Ok(BargainOutcome { winner, runner_up: None, pension: w.floor, floor_binding: true });
    };
    let target = at_max[runner_up] - ctx.beta * f64::from(w.rating);
    if !(target < 0.0) {
        return Err(Error::Infeasible(format!("indifference level {target} is not attainable")));
    }
    let competitive = invert_pension(target, ctx.theta, ctx.factors, ctx.crra)?.min(w.p_max);
    let floor_binding = w.floor > competitive;
    Ok(BargainOutcome { winner, runner_up: Some(runner_up), pension: competitive.max(w.floor), floor_binding })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRound {
    pub pass: usize,
    /// `(firm id, new offer)` for each improvement in this pass.
    pub improvements: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub outcome: BargainOutcome,
    pub final_offers: Vec<f64>,
    pub rounds: Vec<GameRound>,
}

/// Sequential improvement game.
///
/// Firms move in round-robin order of id. A firm improves by `epsilon` when it
/// is not the current favourite and is still below its break-even pension; a
/// step that would cross the break-even pension lands exactly on it. The game
/// ends after a full pass without improvements.
pub fn bargain_game(bidders: &[Bidder], ctx: &BargainContext, epsilon: f64, record_log: bool) -> Result<GameOutcome> {
    validate(bidders)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return domain(format!("epsilon must be positive, got {epsilon}"));
    }
    let mut order: Vec<usize> = (0..bidders.len()).collect();
    order.sort_by_key(|&j| bidders[j].id);

    let mut steps = vec![0u64; bidders.len()];
    let mut offers: Vec<f64> = bidders.iter().map(|b| b.floor.min(b.p_max)).collect();
    let mut values: Vec<f64> = bidders.iter().zip(&offers).map(|(b, p)| ctx.value(b.rating, *p)).collect();
    let mut leader = argmax_excluding(&values, bidders, None).expect("non-empty");

    let budget: f64 = bidders.iter().map(|b| ((b.p_max - b.floor) / epsilon).ceil() + 1.0).sum();
    let max_passes = budget as usize + 2;
    let mut rounds = Vec::new();
    let mut pass = 0;
    loop {
        if pass > max_passes {
            return Err(Error::NonConvergence { iterations: pass, detail: "bargaining game round cap reached".into() });
        }
        let mut improvements = Vec::new();
        for &j in &order {
            let b = bidders[j];
            if j == leader || offers[j] >= b.p_max {
                continue;
            }
            steps[j] += 1;
            let next = b.floor + steps[j] as f64 * epsilon;
            offers[j] = if next >= b.p_max { b.p_max } else { next };
            values[j] = ctx.value(b.rating, offers[j]);
            if beats((values[j], b.id), (values[leader], bidders[leader].id)) {
                leader = j;
            }
            improvements.push((b.id, offers[j]));
        }
        pass += 1;
        if improvements.is_empty() {
            break;
        }
        if record_log {
            rounds.push(GameRound { pass, improvements });
        }
    }
    let runner_up = argmax_excluding(
        &bidders.iter().map(|b| ctx.value(b.rating, b.p_max)).collect::<Vec<_>>(),
        bidders,
        Some(leader),
    );
    let pension = offers[leader];
    Ok(GameOutcome {
        outcome: BargainOutcome { winner: leader, runner_up, pension, floor_binding: steps[leader] == 0 },
        final_offers: offers,
        rounds,
    })
}

/// Utility change from raising the pension by `epsilon` at `p`.
pub fn epsilon_utility_step(p: f64, epsilon: f64, ctx: &BargainContext) -> f64 {
    ctx.crra.u(p + epsilon) * ctx.weight() - ctx.crra.u(p) * ctx.weight()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors() -> LifeFactors {
        LifeFactors::from_parts(160.0, 0.0, 8.0, 0.0, 2.0)
    }

    fn bidder(id: u32, rating: u8, p_max: f64) -> Bidder {
        Bidder { id, rating, p_max, floor: p_max / 2.0 }
    }

    #[test]
    fn identical_firms_give_full_rent() {
        let (f, crra) = (factors(), CrraParams::default());
        let ctx = BargainContext { theta: 1.0, beta: 0.0, factors: &f, crra: &crra };
        let out = bargain_closed_form(&[bidder(0, 2, 500.0), bidder(1, 2, 500.0)], &ctx).unwrap();
        assert_eq!(out.winner, 0);
        assert!((out.pension - 500.0).abs() < 1e-9);
    }

    #[test]
    fn no_preferences_reduces_to_second_price() {
        let (f, crra) = (factors(), CrraParams::default());
        let ctx = BargainContext { theta: 0.0, beta: 0.0, factors: &f, crra: &crra };
        let bs = [bidder(0, 1, 420.0), bidder(1, 3, 510.0), bidder(2, 2, 480.0)];
        let out = bargain_closed_form(&bs, &ctx).unwrap();
        assert_eq!((out.winner, out.runner_up), (1, Some(2)));
        assert!((out.pension - 480.0).abs() < 1e-9);
    }

    #[test]
    fn single_bidder_gets_floor() {
        let (f, crra) = (factors(), CrraParams::default());
        let ctx = BargainContext { theta: 0.0, beta: 0.0, factors: &f, crra: &crra };
        let out = bargain_closed_form(&[bidder(4, 1, 400.0)], &ctx).unwrap();
        assert_eq!(out.pension, 200.0);
        assert_eq!(out.runner_up, None);
    }

    #[test]
    fn game_matches_closed_form() {
        let (f, crra) = (factors(), CrraParams::default());
        let beta = 0.02 * crra.u(450.0).abs() * f.utility_weight(0.5, &crra);
        let ctx = BargainContext { theta: 0.5, beta, factors: &f, crra: &crra };
        let bs = [bidder(3, 1, 470.0), bidder(1, 3, 455.0), bidder(2, 2, 440.0)];
        let cf = bargain_closed_form(&bs, &ctx).unwrap();
        let game = bargain_game(&bs, &ctx, 0.5, true).unwrap();
        assert_eq!(game.outcome.winner, cf.winner);
        assert!(game.outcome.pension >= cf.pension - 1e-9);
        assert!(game.outcome.pension < cf.pension + 0.5);
        assert!(!game.rounds.is_empty());
    }

    #[test]
    fn huge_epsilon_needs_one_improvement_round() {
        let (f, crra) = (factors(), CrraParams::default());
        let ctx = BargainContext { theta: 0.0, beta: 0.0, factors: &f, crra: &crra };
        let bs = [bidder(0, 1, 420.0), bidder(1, 1, 510.0)];
        let game = bargain_game(&bs, &ctx, 1e6, true).unwrap();
        assert!(game.rounds.len() <= 2);
        assert_eq!(game.outcome.winner, 1);
    }
}
