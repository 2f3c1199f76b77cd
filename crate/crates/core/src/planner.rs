//! Finite-horizon trust-aware planning and the three interaction strategies.
//!
//! The state is the human's Beta trust distribution. Performance outcomes
//! move it by fixed increments, so from a root `(alpha, beta)` the states
//! reachable after `k` sites form a lattice of `k + 1` nodes indexed by the
//! number of successes. Backward induction over that lattice gives the
//! Q-values of both recommendations at the root.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::human::{boltzmann_unchecked, compliance_unchecked};
use crate::irl::WeightBelief;
use crate::trust::{
    expected_reward_unchecked, performance, Action, BetaTrustState, CostTable, RewardWeights,
    TrustDynamicsParams,
};

pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Assumes the human shares the robot's fixed weights.
    NonLearner,
    /// Learns the human's weights for assessment and behavior modeling but
    /// plans with its own fixed weights.
    NonAdaptiveLearner,
    /// Adopts the learned weights everywhere.
    AdaptiveLearner,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::NonLearner,
        Strategy::NonAdaptiveLearner,
        Strategy::AdaptiveLearner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NonLearner => "non-learner",
            Strategy::NonAdaptiveLearner => "non-adaptive-learner",
            Strategy::AdaptiveLearner => "adaptive-learner",
        }
    }

    pub fn learns(self) -> bool {
        !matches!(self, Strategy::NonLearner)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningContext {
    /// Sites remaining, including the current one.
    pub horizon: usize,
    pub gamma: f64,
    /// Scanned threat level of the current site.
    pub current_threat_prob: f64,
    /// Threat prior used for every site not yet scanned.
    pub prior_threat_prob: f64,
    pub robot_weights: RewardWeights,
    pub assessed_human_weights: RewardWeights,
    pub trust_params: TrustDynamicsParams,
    pub kappa: f64,
    pub costs: CostTable,
}

impl PlanningContext {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("planning horizon must be at least 1".into()));
        }
        check_unit("gamma", self.gamma)?;
        check_unit("current threat probability", self.current_threat_prob)?;
        check_unit("prior threat probability", self.prior_threat_prob)?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::OutOfRange {
                name: "kappa",
                value: self.kappa,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// Threat probability used at lattice stage `k`.
    pub fn threat_prob_at(&self, stage: usize) -> f64 {
        if stage == 0 {
            self.current_threat_prob
        } else {
            self.prior_threat_prob
        }
    }

    /// Fills the weight slots for `strategy`. `self.robot_weights` must hold
    /// the robot's fixed weights.
    pub fn for_strategy(&self, strategy: Strategy, belief: &WeightBelief) -> PlanningContext {
        let mut ctx = *self;
        match strategy {
            Strategy::NonLearner => ctx.assessed_human_weights = self.robot_weights,
            Strategy::NonAdaptiveLearner => ctx.assessed_human_weights = belief.mean_weights(),
            Strategy::AdaptiveLearner => {
                let learned = belief.mean_weights();
                ctx.assessed_human_weights = learned;
                ctx.robot_weights = learned;
            }
        }
        ctx
    }
}

/// Q-values at the root. Ties go to [`Action::Deploy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QValues {
    pub q0: f64,
    pub q1: f64,
    pub recommendation: Action,
}

impl QValues {
    pub fn from_q(q0: f64, q1: f64) -> Self {
        Self {
            q0,
            q1,
            recommendation: if q1 >= q0 { Action::Deploy } else { Action::Proceed },
        }
    }

    pub fn value(&self) -> f64 {
        self.q0.max(self.q1)
    }
}

/// Reachable trust states, stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustLattice {
    stages: Vec<Vec<BetaTrustState>>,
}

impl TrustLattice {
    /// Stages `0..horizon`; stage `k` node `j` has seen `j` successes and
    /// `k - j` failures since the root.
    pub fn build(root: BetaTrustState, params: &TrustDynamicsParams, horizon: usize) -> Self {
        let stages = (0..horizon)
            .map(|k| {
                (0..=k)
                    .map(|j| {
                        BetaTrustState::new(
                            root.alpha() + j as f64 * params.success_gain,
                            root.beta() + (k - j) as f64 * params.failure_gain,
                        )
                        .expect("positive increments keep the state valid")
                    })
                    .collect()
            })
            .collect();
        Self { stages }
    }

    pub fn stages(&self) -> &[Vec<BetaTrustState>] {
        &self.stages
    }

    pub fn node_count(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }
}

/// Robot's expected reward for recommending `rec` at trust `trust_mean`,
/// marginalised over the human's response and threat presence.
pub fn expected_immediate_robot_reward(
    ctx: &PlanningContext,
    trust_mean: f64,
    rec: Action,
    threat_prob: f64,
) -> Result<f64> {
    check_unit("trust mean", trust_mean)?;
    check_unit("threat probability", threat_prob)?;
    let stage = StageModel::new(ctx, threat_prob);
    Ok(stage.immediate(trust_mean, rec))
}

/// Probability that recommending `rec` is judged a success.
pub fn success_prob(
    rec: Action,
    threat_prob: f64,
    assessed: &RewardWeights,
    costs: &CostTable,
) -> Result<f64> {
    check_unit("threat probability", threat_prob)?;
    Ok(success_prob_unchecked(rec, threat_prob, assessed, costs))
}

fn success_prob_unchecked(rec: Action, p: f64, assessed: &RewardWeights, costs: &CostTable) -> f64 {
    let hit = if performance(rec, true, assessed, costs) { 1.0 } else { 0.0 };
    let miss = if performance(rec, false, assessed, costs) { 1.0 } else { 0.0 };
    p * hit + (1.0 - p) * miss
}

/// Everything at one stage that does not depend on the trust node.
struct StageModel {
    /// Robot expected reward if the human takes action `a`.
    robot_reward: [f64; 2],
    /// Behavior-model acceptance probability of recommendation `a`.
    accept: [f64; 2],
    success: [f64; 2],
}

impl StageModel {
    fn new(ctx: &PlanningContext, p: f64) -> Self {
        let per_action = |f: &dyn Fn(Action) -> f64| [f(Action::Proceed), f(Action::Deploy)];
        Self {
            robot_reward: per_action(&|a| {
                expected_reward_unchecked(&ctx.robot_weights, a, p, &ctx.costs)
            }),
            accept: per_action(&|a| {
                boltzmann_unchecked(ctx.kappa, &ctx.assessed_human_weights, a, p, &ctx.costs)
            }),
            success: per_action(&|a| {
                success_prob_unchecked(a, p, &ctx.assessed_human_weights, &ctx.costs)
            }),
        }
    }

    fn immediate(&self, trust: f64, rec: Action) -> f64 {
        let c = compliance_unchecked(trust, self.accept[rec.index()]);
        c.follow * self.robot_reward[rec.index()] + c.defect * self.robot_reward[rec.complement().index()]
    }
}

/// Backward induction from the last site to the current one.
pub fn value_iterate(ctx: &PlanningContext, root: BetaTrustState) -> Result<QValues> {
    ctx.validate()?;
    let lattice = TrustLattice::build(root, &ctx.trust_params, ctx.horizon);
    let current = StageModel::new(ctx, ctx.current_threat_prob);
    let future = StageModel::new(ctx, ctx.prior_threat_prob);

    // Values of stage k + 1, indexed by success count.
    let mut next: Vec<f64> = Vec::new();
    let mut root_q = (0.0, 0.0);
    for (k, nodes) in lattice.stages().iter().enumerate().rev() {
        let model = if k == 0 { &current } else { &future };
        let last = k + 1 == ctx.horizon;
        let mut values = Vec::with_capacity(nodes.len());
        for (j, node) in nodes.iter().enumerate() {
            let t = node.mean();
            let q = |a: Action| {
                let mut q = model.immediate(t, a);
                if !last {
                    let ps = model.success[a.index()];
                    q += ctx.gamma * (ps * next[j + 1] + (1.0 - ps) * next[j]);
                }
                q
            };
            let (q0, q1) = (q(Action::Proceed), q(Action::Deploy));
            if k == 0 {
                root_q = (q0, q1);
            }
            values.push(q0.max(q1));
        }
        next = values;
    }
    Ok(QValues::from_q(root_q.0, root_q.1))
}

/// Applies `strategy` to `template` (whose `robot_weights` are the robot's
/// fixed weights) and plans from `root`.
pub fn recommend(
    strategy: Strategy,
    belief: &WeightBelief,
    template: &PlanningContext,
    root: BetaTrustState,
) -> Result<QValues> {
    value_iterate(&template.for_strategy(strategy, belief), root)
}
