//! Trust state, rewards, recommendation performance and trust transitions.
//!
//! Trust is a `Beta(alpha, beta)` distribution. A recommendation counts as a
//! success when its reward, evaluated with the human's (assessed) weights and
//! the ground truth, is at least the reward of the opposite action. Success
//! adds the success gain to `alpha`, failure adds the failure gain to `beta`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};

/// Whether the armored robot is used at a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    /// Search the site without the armored robot.
    Proceed = 0,
    /// Deploy the armored robot before searching.
    Deploy = 1,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Proceed, Action::Deploy];

    pub fn complement(self) -> Action {
        match self {
            Action::Proceed => Action::Deploy,
            Action::Deploy => Action::Proceed,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Action::Proceed),
            1 => Ok(Action::Deploy),
            other => Err(format!("action must be 0 or 1, got {other}")),
        }
    }
}

/// Parameters of the Beta distribution describing trust at one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeta")]
pub struct BetaTrustState {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawBeta {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawBeta> for BetaTrustState {
    type Error = Error;

    fn try_from(raw: RawBeta) -> Result<Self> {
        BetaTrustState::new(raw.alpha, raw.beta)
    }
}

impl BetaTrustState {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            alpha: check_positive("alpha", alpha)?,
            beta: check_positive("beta", beta)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Point value of trust: the distribution mean.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// One draw from `Beta(alpha, beta)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // alpha, beta > 0 is enforced at construction.
        Beta::new(self.alpha, self.beta)
            .expect("validated beta parameters")
            .sample(rng)
    }

    /// Trust transition after one site.
    pub fn updated(&self, success: bool, params: &TrustDynamicsParams) -> BetaTrustState {
        if success {
            BetaTrustState {
                alpha: self.alpha + params.success_gain,
                beta: self.beta,
            }
        } else {
            BetaTrustState {
                alpha: self.alpha,
                beta: self.beta + params.failure_gain,
            }
        }
    }
}

/// Functional form of the trust transition.
pub fn update_trust(
    state: BetaTrustState,
    success: bool,
    params: &TrustDynamicsParams,
) -> BetaTrustState {
    state.updated(success, params)
}

/// Personal trust dynamics: initial Beta parameters and per-outcome gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDynamics")]
pub struct TrustDynamicsParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub success_gain: f64,
    pub failure_gain: f64,
}

#[derive(Deserialize)]
struct RawDynamics {
    alpha0: f64,
    beta0: f64,
    success_gain: f64,
    failure_gain: f64,
}

impl TryFrom<RawDynamics> for TrustDynamicsParams {
    type Error = Error;

    fn try_from(raw: RawDynamics) -> Result<Self> {
        TrustDynamicsParams::new(raw.alpha0, raw.beta0, raw.success_gain, raw.failure_gain)
    }
}

impl TrustDynamicsParams {
    pub fn new(alpha0: f64, beta0: f64, success_gain: f64, failure_gain: f64) -> Result<Self> {
        Ok(Self {
            alpha0: check_positive("alpha0", alpha0)?,
            beta0: check_positive("beta0", beta0)?,
            success_gain: check_positive("success_gain", success_gain)?,
            failure_gain: check_positive("failure_gain", failure_gain)?,
        })
    }

    pub fn initial_state(&self) -> BetaTrustState {
        BetaTrustState {
            alpha: self.alpha0,
            beta: self.beta0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha0, self.beta0, self.success_gain, self.failure_gain]
    }

    /// Builds parameters from `[alpha0, beta0, success_gain, failure_gain]`.
    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Propagates the initial state through a sequence of outcomes, returning
    /// the state after each one.
    pub fn propagate(&self, outcomes: &[bool]) -> Vec<BetaTrustState> {
        let mut state = self.initial_state();
        outcomes
            .iter()
            .map(|&s| {
                state = state.updated(s, self);
                state
            })
            .collect()
    }
}

/// Health/time trade-off. The time weight is always `1 - health`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RewardWeights {
    health: f64,
}

impl RewardWeights {
    pub fn new(health: f64) -> Result<Self> {
        Ok(Self {
            health: check_unit("health weight", health)?,
        })
    }

    pub fn health(&self) -> f64 {
        self.health
    }

    pub fn time(&self) -> f64 {
        1.0 - self.health
    }
}

impl TryFrom<f64> for RewardWeights {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        RewardWeights::new(v)
    }
}

impl From<RewardWeights> for f64 {
    fn from(w: RewardWeights) -> f64 {
        w.health
    }
}

/// Health and time costs.
///
/// Only two entries can be nonzero: the health lost when a threat is met
/// without protection and the time spent deploying the armored robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCosts")]
pub struct CostTable {
    health_loss: f64,
    deploy_time: f64,
}

#[derive(Deserialize)]
struct RawCosts {
    health_loss: f64,
    deploy_time: f64,
}

impl TryFrom<RawCosts> for CostTable {
    type Error = Error;

    fn try_from(raw: RawCosts) -> Result<Self> {
        CostTable::new(raw.health_loss, raw.deploy_time)
    }
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            health_loss: 10.0,
            deploy_time: 10.0,
        }
    }
}

impl CostTable {
    pub fn new(health_loss: f64, deploy_time: f64) -> Result<Self> {
        for (name, v) in [("health_loss", health_loss), ("deploy_time", deploy_time)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        Ok(Self {
            health_loss,
            deploy_time,
        })
    }

    /// `h(a, D)`.
    pub fn health_cost(&self, action: Action, threat_present: bool) -> f64 {
        match (action, threat_present) {
            (Action::Proceed, true) => self.health_loss,
            _ => 0.0,
        }
    }

    /// `c(a)`.
    pub fn time_cost(&self, action: Action) -> f64 {
        match action {
            Action::Proceed => 0.0,
            Action::Deploy => self.deploy_time,
        }
    }
}

/// What is actually inside a site, plus the drone's reported threat level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteGroundTruth {
    pub threat_present: bool,
    pub scan_level: f64,
}

/// Reward of one site for an agent with the given weights. Never positive
/// for a valid cost table.
pub fn reward(
    weights: &RewardWeights,
    action: Action,
    threat_present: bool,
    costs: &CostTable,
) -> f64 {
    -weights.health() * costs.health_cost(action, threat_present)
        - weights.time() * costs.time_cost(action)
}

/// Reward marginalised over threat presence.
pub fn expected_reward(
    weights: &RewardWeights,
    action: Action,
    threat_prob: f64,
    costs: &CostTable,
) -> Result<f64> {
    let p = check_unit("threat probability", threat_prob)?;
    Ok(expected_reward_unchecked(weights, action, p, costs))
}

pub(crate) fn expected_reward_unchecked(
    weights: &RewardWeights,
    action: Action,
    p: f64,
    costs: &CostTable,
) -> f64 {
    p * reward(weights, action, true, costs) + (1.0 - p) * reward(weights, action, false, costs)
}

/// Whether a recommendation was a success. Ties count as success.
pub fn performance(
    recommendation: Action,
    threat_present: bool,
    assessed: &RewardWeights,
    costs: &CostTable,
) -> bool {
    reward(assessed, recommendation, threat_present, costs)
        >= reward(assessed, recommendation.complement(), threat_present, costs)
}
