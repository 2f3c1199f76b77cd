//! Trust-aware recommendation under value misalignment.
//!
//! A robot recommends one of two actions at each site of a search mission.
//! The human may follow or defect. The robot keeps a Beta model of the
//! human's trust, infers the human's reward weights from their choices and
//! plans over the rest of the mission.

pub mod error;
pub mod human;
pub mod irl;
pub mod journal;
pub mod log;
pub mod mission;
pub mod mle;
pub mod planner;
pub mod robot;
pub mod seed;
pub mod trust;

pub use error::{Error, Result};
pub use human::{BehaviorModel, HumanAgent, HumanBriefing, SimulatedHuman, ThetaSource};
pub use irl::{Observation, WeightBelief};
pub use log::{replay, LogError, MissionLog, SiteRecord};
pub use mission::{run_mission, run_simulated_mission, MissionConfig, MissionMetrics};
pub use mle::{fit_trust_params, FeedbackRecord, MleFit, MleOptions};
pub use planner::{recommend, value_iterate, PlanningContext, QValues, Strategy};
pub use robot::{Decision, RobotAgent, RobotConfig, RobotUpdate};
pub use seed::mix_seed;
pub use trust::{Action, BetaTrustState, CostTable, RewardWeights, SiteGroundTruth, TrustDynamicsParams};
