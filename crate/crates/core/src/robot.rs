//! The recommender's per-site pipeline.
//!
//! The robot only ever sees the scan, the human's action, the revealed
//! ground truth and the reported trust. From those it keeps:
//! - a belief over the human's health weight,
//! - its own performance assessments,
//! - a fitted estimate of the human's trust dynamics, refit after every site.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Result};
use crate::irl::{Observation, WeightBelief, DEFAULT_GRID_SIZE};
use crate::mle::{fit_trust_params, FeedbackRecord, MleOptions};
use crate::planner::{value_iterate, PlanningContext, QValues, Strategy, DEFAULT_GAMMA};
use crate::trust::{
    performance, Action, BetaTrustState, CostTable, RewardWeights, SiteGroundTruth,
    TrustDynamicsParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub strategy: Strategy,
    pub fixed_weights: RewardWeights,
    /// Rationality assumed for the human.
    pub kappa: f64,
    pub gamma: f64,
    pub costs: CostTable,
    pub prior_threat: f64,
    pub num_sites: usize,
    /// Starting guess for the human's trust dynamics and anchor of the fit.
    pub trust_guess: TrustDynamicsParams,
    pub grid_size: usize,
    pub mle: MleOptions,
}

impl RobotConfig {
    pub fn new(strategy: Strategy, fixed_weights: RewardWeights, prior_threat: f64, num_sites: usize) -> Self {
        Self {
            strategy,
            fixed_weights,
            kappa: 1.0,
            gamma: DEFAULT_GAMMA,
            costs: CostTable::default(),
            prior_threat,
            num_sites,
            trust_guess: default_trust_guess(),
            grid_size: DEFAULT_GRID_SIZE,
            mle: MleOptions::default(),
        }
    }
}

pub fn default_trust_guess() -> TrustDynamicsParams {
    TrustDynamicsParams::new(2.0, 2.0, 5.0, 5.0).expect("positive")
}

/// What the robot decided before the human acted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub site_index: usize,
    pub scan_level: f64,
    pub q_values: QValues,
    /// Human weights used for assessment and behavior modeling at this site.
    pub assessed_weights: RewardWeights,
    pub trust_mean_before: f64,
    pub belief_mean_before: f64,
}

impl Decision {
    pub fn recommendation(&self) -> Action {
        self.q_values.recommendation
    }
}

/// Robot-side bookkeeping after a site completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotUpdate {
    pub perf_assessed: bool,
    pub trust_mean_after: f64,
    pub belief_mean_after: f64,
    pub fitted_params: TrustDynamicsParams,
    pub fit_converged: bool,
    pub belief_masses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RobotAgent {
    config: RobotConfig,
    belief: WeightBelief,
    fitted: TrustDynamicsParams,
    assessed: Vec<bool>,
    history: Vec<FeedbackRecord>,
    trust: BetaTrustState,
}

impl RobotAgent {
    pub fn new(config: RobotConfig) -> Result<Self> {
        check_unit("prior threat", config.prior_threat)?;
        let belief = WeightBelief::uniform(config.grid_size)?;
        let fitted = config.trust_guess;
        Ok(Self {
            trust: fitted.initial_state(),
            belief,
            fitted,
            assessed: Vec::new(),
            history: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn belief(&self) -> &WeightBelief {
        &self.belief
    }

    pub fn fitted_params(&self) -> TrustDynamicsParams {
        self.fitted
    }

    pub fn trust_state(&self) -> BetaTrustState {
        self.trust
    }

    pub fn sites_completed(&self) -> usize {
        self.history.len()
    }

    pub fn sites_remaining(&self) -> usize {
        self.config.num_sites.saturating_sub(self.history.len())
    }

    /// Weights for assessment and for the behavior model.
    pub fn assessed_weights(&self) -> RewardWeights {
        if self.config.strategy.learns() {
            self.belief.mean_weights()
        } else {
            self.config.fixed_weights
        }
    }

    /// Planning template with the fixed weights in the robot slot.
    pub fn planning_template(&self, scan_level: f64) -> PlanningContext {
        PlanningContext {
            horizon: self.sites_remaining().max(1),
            gamma: self.config.gamma,
            current_threat_prob: scan_level,
            prior_threat_prob: self.config.prior_threat,
            robot_weights: self.config.fixed_weights,
            assessed_human_weights: self.config.fixed_weights,
            trust_params: self.fitted,
            kappa: self.config.kappa,
            costs: self.config.costs,
        }
    }

    /// Plans a recommendation for the next site. Does not change state.
    pub fn decide(&self, scan_level: f64) -> Result<Decision> {
        check_unit("scan level", scan_level)?;
        let ctx = self
            .planning_template(scan_level)
            .for_strategy(self.config.strategy, &self.belief);
        let q_values = value_iterate(&ctx, self.trust)?;
        Ok(Decision {
            site_index: self.history.len() + 1,
            scan_level,
            q_values,
            assessed_weights: ctx.assessed_human_weights,
            trust_mean_before: self.trust.mean(),
            belief_mean_before: self.belief.mean_weight(),
        })
    }

    /// Assessment, weight-belief update and trust refit for a completed site.
    pub fn observe(
        &mut self,
        decision: &Decision,
        human_action: Action,
        truth: &SiteGroundTruth,
        reported_trust: f64,
    ) -> Result<RobotUpdate> {
        let rec = decision.recommendation();
        let success = performance(rec, truth.threat_present, &decision.assessed_weights, &self.config.costs);
        self.assessed.push(success);
        self.trust = self.trust.updated(success, &self.fitted);

        if self.config.strategy.learns() {
            let obs = Observation {
                trust_estimate: decision.trust_mean_before,
                recommendation: rec,
                threat_prob: decision.scan_level,
                kappa: self.config.kappa,
            };
            self.belief = self.belief.update(&obs, human_action, &self.config.costs)?;
        }

        self.history.push(FeedbackRecord {
            site_index: decision.site_index,
            reported_trust,
            success,
        });
        let fit = fit_trust_params(&self.history, &self.fitted, &self.config.trust_guess, &self.config.mle)?;
        self.fitted = fit.params;
        self.trust = *self
            .fitted
            .propagate(&self.assessed)
            .last()
            .expect("at least one outcome");

        Ok(RobotUpdate {
            perf_assessed: success,
            trust_mean_after: self.trust.mean(),
            belief_mean_after: self.belief.mean_weight(),
            fitted_params: self.fitted,
            fit_converged: fit.converged,
            belief_masses: self.belief.masses().to_vec(),
        })
    }
}
