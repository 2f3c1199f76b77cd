//! Mission configuration, threat fields, the per-site interaction loop and
//! mission metrics.
//!
//! Each site runs in a fixed order:
//! 1. the drone's scan level is revealed,
//! 2. the robot recommends,
//! 3. the human acts,
//! 4. ground truth is revealed and costs are applied,
//! 5. the human updates its own trust and reports it,
//! 6. the robot assesses performance and advances its trust estimate,
//! 7. the robot updates its weight belief,
//! 8. the robot refits trust dynamics on the full history.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};
use crate::human::{HumanAgent, HumanBriefing, SimulatedHuman};
use crate::irl::DEFAULT_GRID_SIZE;
use crate::log::{EndReason, HumanSnapshot, LogFooter, LogHeader, LogSource, MissionLog, SiteRecord};
use crate::mle::MleOptions;
use crate::planner::{Strategy, DEFAULT_GAMMA};
use crate::robot::{default_trust_guess, Decision, RobotAgent, RobotConfig, RobotUpdate};
use crate::seed::{mix_seed, stream};
use crate::trust::{performance, Action, CostTable, RewardWeights, SiteGroundTruth, TrustDynamicsParams};

/// Drone scan-level distributions, as Beta parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanModel {
    pub no_threat: (f64, f64),
    pub threat: (f64, f64),
}

impl Default for ScanModel {
    /// Modes at exactly 0.1 and 0.9.
    fn default() -> Self {
        Self {
            no_threat: (2.8, 17.2),
            threat: (17.2, 2.8),
        }
    }
}

impl ScanModel {
    pub fn validate(&self) -> Result<()> {
        for v in [self.no_threat.0, self.no_threat.1, self.threat.0, self.threat.1] {
            check_positive("scan model parameter", v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatFieldMode {
    /// Independent Bernoulli(d) per site.
    Bernoulli,
    /// Exactly `round(d * M)` threats at uniformly random sites.
    ExactCount,
}

/// How health and time are accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bookkeeping {
    /// Abstract cost units from the cost table.
    Simulation,
    /// Health points and seconds from [`TestbedConstants`].
    Testbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestbedConstants {
    pub health_start: f64,
    pub health_loss_per_hit: f64,
    pub time_budget_s: f64,
    pub deploy_time_s: f64,
    /// Search time of a site without the armored robot. Placeholder value.
    pub base_search_time_s: f64,
}

impl Default for TestbedConstants {
    fn default() -> Self {
        Self {
            health_start: 100.0,
            health_loss_per_hit: 5.0,
            time_budget_s: 25.0 * 60.0,
            deploy_time_s: 15.0,
            base_search_time_s: 20.0,
        }
    }
}

impl TestbedConstants {
    pub fn validate(&self) -> Result<()> {
        check_positive("health_start", self.health_start)?;
        check_positive("health_loss_per_hit", self.health_loss_per_hit)?;
        check_positive("time_budget_s", self.time_budget_s)?;
        check_positive("deploy_time_s", self.deploy_time_s)?;
        check_positive("base_search_time_s", self.base_search_time_s)?;
        Ok(())
    }

    pub fn search_time(&self, action: Action) -> f64 {
        match action {
            Action::Proceed => self.base_search_time_s,
            Action::Deploy => self.base_search_time_s + self.deploy_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub num_sites: usize,
    pub prior_threat: f64,
    pub strategy: Strategy,
    pub robot_fixed_weights: RewardWeights,
    /// Rationality the robot assumes for the human.
    pub kappa: f64,
    pub gamma: f64,
    pub costs: CostTable,
    pub seed: u64,
    pub threat_field: ThreatFieldMode,
    pub scan_model: ScanModel,
    pub bookkeeping: Bookkeeping,
    pub testbed: TestbedConstants,
    pub trust_guess: TrustDynamicsParams,
    pub grid_size: usize,
    pub mle: MleOptions,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            num_sites: 40,
            prior_threat: 0.575,
            strategy: Strategy::NonLearner,
            robot_fixed_weights: RewardWeights::new(0.5).expect("valid"),
            kappa: 1.0,
            gamma: DEFAULT_GAMMA,
            costs: CostTable::default(),
            seed: 0,
            threat_field: ThreatFieldMode::Bernoulli,
            scan_model: ScanModel::default(),
            bookkeeping: Bookkeeping::Simulation,
            testbed: TestbedConstants::default(),
            trust_guess: default_trust_guess(),
            grid_size: DEFAULT_GRID_SIZE,
            mle: MleOptions::default(),
        }
    }
}

impl MissionConfig {
    /// Settings of the interactive testbed: exact threat count, health points
    /// and a seconds-based clock.
    pub fn testbed() -> Self {
        Self {
            threat_field: ThreatFieldMode::ExactCount,
            bookkeeping: Bookkeeping::Testbed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sites == 0 {
            return Err(Error::InvalidConfig("num_sites must be at least 1".into()));
        }
        check_unit("prior_threat", self.prior_threat)?;
        check_unit("gamma", self.gamma)?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if self.grid_size < 2 {
            return Err(Error::GridTooSmall(self.grid_size));
        }
        self.scan_model.validate()?;
        self.testbed.validate()?;
        Ok(())
    }

    pub fn robot_config(&self) -> RobotConfig {
        RobotConfig {
            strategy: self.strategy,
            fixed_weights: self.robot_fixed_weights,
            kappa: self.kappa,
            gamma: self.gamma,
            costs: self.costs,
            prior_threat: self.prior_threat,
            num_sites: self.num_sites,
            trust_guess: self.trust_guess,
            grid_size: self.grid_size,
            mle: self.mle,
        }
    }

    pub fn threat_field(&self) -> Vec<SiteGroundTruth> {
        match self.threat_field {
            ThreatFieldMode::Bernoulli => {
                generate_threat_field(self.num_sites, self.prior_threat, self.seed, &self.scan_model)
            }
            ThreatFieldMode::ExactCount => {
                generate_exact_threat_field(self.num_sites, self.prior_threat, self.seed, &self.scan_model)
            }
        }
    }

    /// Health and time change for one site.
    pub fn site_costs(&self, action: Action, threat_present: bool, health_left: f64) -> (f64, f64) {
        match self.bookkeeping {
            Bookkeeping::Simulation => (
                -self.costs.health_cost(action, threat_present),
                self.costs.time_cost(action),
            ),
            Bookkeeping::Testbed => {
                let loss = if action == Action::Proceed && threat_present {
                    self.testbed.health_loss_per_hit.min(health_left.max(0.0))
                } else {
                    0.0
                };
                (-loss, self.testbed.search_time(action))
            }
        }
    }

    pub fn health_start(&self) -> f64 {
        match self.bookkeeping {
            Bookkeeping::Simulation => self.num_sites as f64 * self.costs.health_cost(Action::Proceed, true),
            Bookkeeping::Testbed => self.testbed.health_start,
        }
    }

    /// Time available; in simulation, the cost of deploying at every site.
    pub fn time_budget(&self) -> f64 {
        match self.bookkeeping {
            Bookkeeping::Simulation => self.num_sites as f64 * self.costs.time_cost(Action::Deploy),
            Bookkeeping::Testbed => self.testbed.time_budget_s,
        }
    }
}

fn draw_scan(rng: &mut ChaCha8Rng, threat: bool, model: &ScanModel) -> f64 {
    let (a, b) = if threat { model.threat } else { model.no_threat };
    Beta::new(a, b).expect("validated scan model").sample(rng)
}

/// Independent Bernoulli(`prior_threat`) threat per site with scan levels.
pub fn generate_threat_field(
    num_sites: usize,
    prior_threat: f64,
    seed: u64,
    scan: &ScanModel,
) -> Vec<SiteGroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream::THREAT_FIELD]));
    let d = prior_threat.clamp(0.0, 1.0);
    (0..num_sites)
        .map(|_| {
            let threat_present = rng.random_bool(d);
            SiteGroundTruth {
                threat_present,
                scan_level: draw_scan(&mut rng, threat_present, scan),
            }
        })
        .collect()
}

/// Exactly `round(prior_threat * num_sites)` threats, placed uniformly.
pub fn generate_exact_threat_field(
    num_sites: usize,
    prior_threat: f64,
    seed: u64,
    scan: &ScanModel,
) -> Vec<SiteGroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream::THREAT_FIELD]));
    let count = ((prior_threat.clamp(0.0, 1.0) * num_sites as f64).round() as usize).min(num_sites);
    let mut threats = vec![false; num_sites];
    for i in sample_indices(&mut rng, num_sites, count) {
        threats[i] = true;
    }
    threats
        .into_iter()
        .map(|threat_present| SiteGroundTruth {
            threat_present,
            scan_level: draw_scan(&mut rng, threat_present, scan),
        })
        .collect()
}

/// End-of-mission measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub sites_completed: usize,
    pub average_trust: f64,
    /// Final reported trust.
    pub end_of_mission_trust: f64,
    /// Final internal trust mean of a simulated human, when known.
    pub end_of_mission_trust_mean: Option<f64>,
    pub agreements: usize,
    pub performance_score: f64,
    pub health_remaining_pct: f64,
    pub time_spent_pct: f64,
}

/// `w_h * %health + w_c * (100 - %time)`.
pub fn performance_score(stated: &RewardWeights, health_remaining_pct: f64, time_spent_pct: f64) -> f64 {
    stated.health() * health_remaining_pct + stated.time() * (100.0 - time_spent_pct)
}

/// Computes metrics from a mission trace.
///
/// A log is complete when it holds every site, or when a testbed mission ran
/// out of time.
pub fn compute_metrics(
    config: &MissionConfig,
    sites: &[SiteRecord],
    stated: &RewardWeights,
) -> Result<MissionMetrics> {
    compute_metrics_with_trailing(config, sites, stated, 0.0)
}

/// As [`compute_metrics`], with `trailing_wait` seconds of clock time spent
/// after the last recorded site (a real-time clock running out mid-site).
pub fn compute_metrics_with_trailing(
    config: &MissionConfig,
    sites: &[SiteRecord],
    stated: &RewardWeights,
    trailing_wait: f64,
) -> Result<MissionMetrics> {
    if sites.is_empty() {
        return Err(Error::IncompleteLog("no sites recorded".into()));
    }
    for (i, s) in sites.iter().enumerate() {
        if s.index != i + 1 {
            return Err(Error::IncompleteLog(format!("record {} has site index {}", i + 1, s.index)));
        }
    }
    let spent: f64 = sites.iter().map(|s| s.time_delta + s.wait_time).sum::<f64>() + trailing_wait;
    let budget = config.time_budget();
    let out_of_time = config.bookkeeping == Bookkeeping::Testbed && spent >= budget;
    if sites.len() != config.num_sites && !out_of_time {
        return Err(Error::IncompleteLog(format!(
            "{} of {} sites recorded",
            sites.len(),
            config.num_sites
        )));
    }

    let m = sites.len() as f64;
    let health_start = config.health_start();
    let health_lost: f64 = -sites.iter().map(|s| s.health_delta).sum::<f64>();
    let health_remaining_pct = if health_start > 0.0 {
        (100.0 * (health_start - health_lost) / health_start).clamp(0.0, 100.0)
    } else {
        100.0
    };
    let time_spent_pct = if budget > 0.0 {
        (100.0 * spent / budget).clamp(0.0, 100.0)
    } else {
        0.0
    };
    let last = sites.last().expect("nonempty");
    Ok(MissionMetrics {
        sites_completed: sites.len(),
        average_trust: sites.iter().map(|s| s.trust_feedback).sum::<f64>() / m,
        end_of_mission_trust: last.trust_feedback,
        end_of_mission_trust_mean: last.human_trust_mean,
        agreements: sites.iter().filter(|s| s.human_action == s.recommendation).count(),
        performance_score: performance_score(stated, health_remaining_pct, time_spent_pct),
        health_remaining_pct,
        time_spent_pct,
    })
}

/// Assembles a site record from the robot's view and the lab's view.
#[allow(clippy::too_many_arguments)]
pub fn site_record(
    decision: &Decision,
    truth: &SiteGroundTruth,
    human_action: Action,
    trust_feedback: f64,
    update: RobotUpdate,
    perf_true: bool,
    costs: (f64, f64),
    human_trust_mean: Option<f64>,
) -> SiteRecord {
    SiteRecord {
        index: decision.site_index,
        scan_level: truth.scan_level,
        threat_present: truth.threat_present,
        recommendation: decision.recommendation(),
        human_action,
        perf_assessed_by_robot: update.perf_assessed,
        perf_true,
        trust_feedback,
        robot_trust_mean_before: decision.trust_mean_before,
        robot_trust_mean_after: update.trust_mean_after,
        belief_mean_before: decision.belief_mean_before,
        belief_mean_after: update.belief_mean_after,
        q_values: decision.q_values,
        assessed_weights: decision.assessed_weights,
        fitted_params: update.fitted_params,
        fit_converged: update.fit_converged,
        belief_masses: update.belief_masses,
        health_delta: costs.0,
        time_delta: costs.1,
        wait_time: 0.0,
        human_trust_mean,
    }
}

/// Runs a whole mission against any human. `stated` are the weights used for
/// the human-side performance judgment in the log and the score.
pub fn run_mission<H: HumanAgent>(
    config: &MissionConfig,
    human: &mut H,
    stated: RewardWeights,
    snapshot: Option<HumanSnapshot>,
) -> Result<MissionLog> {
    config.validate()?;
    let mut robot = RobotAgent::new(config.robot_config())?;
    let mut sites = Vec::with_capacity(config.num_sites);
    let mut health = config.health_start();
    let mut spent = 0.0;
    let mut ended = EndReason::AllSites;

    for truth in config.threat_field() {
        let decision = robot.decide(truth.scan_level)?;
        let rec = decision.recommendation();
        let action = human.choose_action(&HumanBriefing {
            scan_level: truth.scan_level,
            recommendation: rec,
        });
        let costs = config.site_costs(action, truth.threat_present, health);
        health += costs.0;
        spent += costs.1;
        let feedback = human.report_trust(rec, &truth);
        let perf_true = performance(rec, truth.threat_present, &stated, &config.costs);
        let human_mean = human.internal_trust_mean();
        let update = robot.observe(&decision, action, &truth, feedback)?;
        sites.push(site_record(&decision, &truth, action, feedback, update, perf_true, costs, human_mean));
        if config.bookkeeping == Bookkeeping::Testbed && spent >= config.time_budget() {
            if sites.len() < config.num_sites {
                ended = EndReason::BudgetExhausted;
            }
            break;
        }
    }

    let metrics = compute_metrics(config, &sites, &stated)?;
    Ok(MissionLog {
        header: LogHeader::new(config.clone(), stated, LogSource::Simulation, snapshot),
        sites,
        footer: Some(LogFooter {
            metrics,
            ended,
            trailing_wait: 0.0,
        }),
    })
}

/// Runs a mission against a simulated human, whose true weights double as its
/// stated preference.
pub fn run_simulated_mission(config: &MissionConfig, mut human: SimulatedHuman) -> Result<MissionLog> {
    let stated = human.true_weights();
    let snapshot = HumanSnapshot {
        dynamics: human.dynamics(),
        weights: stated,
    };
    run_mission(config, &mut human, stated, Some(snapshot))
}
