//! Recursive expectimax over explicit trust states, sharing nothing with the
//! lattice planner beyond the reward, choice and trust-update primitives.

use rand::Rng;
use valign_core::human::{boltzmann_prob, compliance_pmf, BehaviorModel};
use valign_core::trust::{performance, reward};
use valign_core::{Action, BetaTrustState, CostTable, PlanningContext, RewardWeights, TrustDynamicsParams};

fn threat_outcomes(p: f64) -> [(bool, f64); 2] {
    [(true, p), (false, 1.0 - p)]
}

fn immediate(ctx: &PlanningContext, trust: f64, rec: Action, p: f64) -> f64 {
    let model = BehaviorModel::new(ctx.kappa, ctx.assessed_human_weights).unwrap();
    let accept = boltzmann_prob(&model, rec, p, &ctx.costs).unwrap();
    let c = compliance_pmf(trust, accept).unwrap();
    threat_outcomes(p)
        .iter()
        .map(|&(threat, pt)| {
            pt * (c.follow * reward(&ctx.robot_weights, rec, threat, &ctx.costs)
                + c.defect * reward(&ctx.robot_weights, rec.complement(), threat, &ctx.costs))
        })
        .sum()
}

fn success(ctx: &PlanningContext, rec: Action, p: f64) -> f64 {
    threat_outcomes(p)
        .iter()
        .filter(|&&(threat, _)| performance(rec, threat, &ctx.assessed_human_weights, &ctx.costs))
        .map(|&(_, pt)| pt)
        .sum()
}

pub fn q(ctx: &PlanningContext, state: BetaTrustState, stage: usize, rec: Action) -> f64 {
    let p = if stage == 0 {
        ctx.current_threat_prob
    } else {
        ctx.prior_threat_prob
    };
    let mut v = immediate(ctx, state.mean(), rec, p);
    if stage + 1 < ctx.horizon {
        let ps = success(ctx, rec, p);
        let up = state.updated(true, &ctx.trust_params);
        let down = state.updated(false, &ctx.trust_params);
        v += ctx.gamma * (ps * value(ctx, up, stage + 1) + (1.0 - ps) * value(ctx, down, stage + 1));
    }
    v
}

fn value(ctx: &PlanningContext, state: BetaTrustState, stage: usize) -> f64 {
    q(ctx, state, stage, Action::Proceed).max(q(ctx, state, stage, Action::Deploy))
}

pub fn random_context<R: Rng>(rng: &mut R) -> (PlanningContext, BetaTrustState) {
    let ctx = PlanningContext {
        horizon: rng.random_range(1..=4),
        gamma: rng.random_range(0.0..=1.0),
        current_threat_prob: rng.random_range(0.0..=1.0),
        prior_threat_prob: rng.random_range(0.0..=1.0),
        robot_weights: RewardWeights::new(rng.random_range(0.0..=1.0)).unwrap(),
        assessed_human_weights: RewardWeights::new(rng.random_range(0.0..=1.0)).unwrap(),
        trust_params: TrustDynamicsParams::new(
            rng.random_range(0.5..50.0),
            rng.random_range(0.5..50.0),
            rng.random_range(0.5..20.0),
            rng.random_range(0.5..20.0),
        )
        .unwrap(),
        kappa: rng.random_range(0.0..5.0),
        costs: CostTable::new(rng.random_range(1.0..20.0), rng.random_range(1.0..20.0)).unwrap(),
    };
    let root = BetaTrustState::new(rng.random_range(0.5..60.0), rng.random_range(0.5..60.0)).unwrap();
    (ctx, root)
}
