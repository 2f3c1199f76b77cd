//! The per-session state machine.
//!
//! A session changes only by applying [`Event`]s. Handlers plan an event
//! against the current state, persist it, then apply it, so the state after
//! a restart is the fold of the persisted events.

use serde::{Deserialize, Serialize};
use valign_core::log::{EndReason, LogFooter, LogHeader, LogSource};
use valign_core::mission::{compute_metrics_with_trailing, site_record, ThreatFieldMode};
use valign_core::trust::performance;
use valign_core::{
    Action, Decision, MissionConfig, MissionLog, MissionMetrics, RewardWeights, RobotAgent, SiteGroundTruth,
    SiteRecord, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Phase {
    AwaitingAction,
    AwaitingFeedback,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ClockMode {
    /// Only per-site search times are charged.
    #[default]
    Simulated,
    /// Wall time spent choosing an action is charged too.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Created {
        session_id: String,
        config: MissionConfig,
        stated_preference: RewardWeights,
        clock: ClockMode,
        reveal_strategy: bool,
        at_ms: u64,
    },
    ActionTaken {
        site: usize,
        action: Action,
        /// Seconds spent choosing, zero with a simulated clock.
        wait_time: f64,
        health_delta: f64,
        time_delta: f64,
        at_ms: u64,
    },
    FeedbackGiven {
        site: usize,
        /// Slider position, 0 to 100 in steps of 2.
        value: u32,
        next_phase: Phase,
        at_ms: u64,
    },
    /// The real-time clock ran out while the human was choosing.
    TimedOut {
        site: usize,
        trailing_wait: f64,
        at_ms: u64,
    },
}

impl Event {
    pub fn at_ms(&self) -> u64 {
        match self {
            Event::Created { at_ms, .. }
            | Event::ActionTaken { at_ms, .. }
            | Event::FeedbackGiven { at_ms, .. }
            | Event::TimedOut { at_ms, .. } => *at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session is {found:?}, expected {expected:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("session is finished")]
    Finished,
    #[error("invalid request: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error("no sites were played")]
    NothingPlayed,
    #[error("event does not fit the session state: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Core(#[from] valign_core::Error),
}

impl SessionError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        SessionError::Invalid(vec![FieldError::new(field, message)])
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Overrides applied on top of the testbed defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct CreateRequest {
    pub strategy: Option<Strategy>,
    pub num_sites: Option<usize>,
    pub prior_threat: Option<f64>,
    pub seed: Option<u64>,
    /// Health weight the non-adaptive strategies assume.
    pub robot_weight: Option<f64>,
    /// The participant's own health weight, used for scoring.
    pub stated_preference: Option<f64>,
    pub clock: ClockMode,
    pub reveal_strategy: bool,
    pub threat_field: Option<ThreatFieldMode>,
    pub time_budget_s: Option<f64>,
    pub deploy_time_s: Option<f64>,
    pub base_search_time_s: Option<f64>,
}

pub const DEFAULT_STATED_PREFERENCE: f64 = 0.5;
pub const MAX_SITES: usize = 1000;

fn unit(field: &str, v: f64, errors: &mut Vec<FieldError>) -> Option<RewardWeights> {
    match RewardWeights::new(v) {
        Ok(w) => Some(w),
        Err(_) => {
            errors.push(FieldError::new(field, format!("must be in [0, 1], got {v}")));
            None
        }
    }
}

fn positive(field: &str, v: Option<f64>, errors: &mut Vec<FieldError>) {
    if let Some(v) = v {
        if !(v.is_finite() && v > 0.0) {
            errors.push(FieldError::new(field, format!("must be positive, got {v}")));
        }
    }
}

impl CreateRequest {
    /// Builds the `Created` event; `seed` is used when none was requested.
    pub fn plan(&self, session_id: String, seed: u64, now_ms: u64) -> Result<Event> {
        let mut errors = Vec::new();
        let mut config = MissionConfig::testbed();
        config.seed = self.seed.unwrap_or(seed);
        if let Some(s) = self.strategy {
            config.strategy = s;
        }
        if let Some(n) = self.num_sites {
            if n == 0 || n > MAX_SITES {
                errors.push(FieldError::new("numSites", format!("must be in 1..={MAX_SITES}, got {n}")));
            } else {
                config.num_sites = n;
            }
        }
        if let Some(d) = self.prior_threat {
            if (0.0..=1.0).contains(&d) {
                config.prior_threat = d;
            } else {
                errors.push(FieldError::new("priorThreat", format!("must be in [0, 1], got {d}")));
            }
        }
        if let Some(w) = self.robot_weight.and_then(|v| unit("robotWeight", v, &mut errors)) {
            config.robot_fixed_weights = w;
        }
        let stated = unit(
            "statedPreference",
            self.stated_preference.unwrap_or(DEFAULT_STATED_PREFERENCE),
            &mut errors,
        );
        if let Some(m) = self.threat_field {
            config.threat_field = m;
        }
        positive("timeBudgetS", self.time_budget_s, &mut errors);
        positive("deployTimeS", self.deploy_time_s, &mut errors);
        positive("baseSearchTimeS", self.base_search_time_s, &mut errors);
        let tb = &mut config.testbed;
        tb.time_budget_s = self.time_budget_s.unwrap_or(tb.time_budget_s);
        tb.deploy_time_s = self.deploy_time_s.unwrap_or(tb.deploy_time_s);
        tb.base_search_time_s = self.base_search_time_s.unwrap_or(tb.base_search_time_s);

        if !errors.is_empty() {
            return Err(SessionError::Invalid(errors));
        }
        config.validate().map_err(|e| SessionError::invalid("config", e.to_string()))?;
        Ok(Event::Created {
            session_id,
            config,
            stated_preference: stated.expect("checked"),
            clock: self.clock,
            reveal_strategy: self.reveal_strategy,
            at_ms: now_ms,
        })
    }
}

/// What the participant sees before choosing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Briefing {
    pub site_index: usize,
    pub num_sites: usize,
    pub scan_level: f64,
    pub recommendation: Action,
    pub avg_time_with: f64,
    pub avg_time_without: f64,
    pub health: f64,
    pub clock_remaining: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
}

/// Outcome of a site, echoed back for the feedback dialog.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionOutcome {
    pub site_index: usize,
    pub scan_level: f64,
    pub recommendation: Action,
    pub action: Action,
    pub ground_truth: bool,
    pub health_delta: f64,
    pub time_delta: f64,
    pub health: f64,
    pub clock_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Status {
    pub session_id: String,
    pub phase: Phase,
    pub site_index: usize,
    pub num_sites: usize,
    pub sites_completed: usize,
    pub health: f64,
    pub clock_remaining: f64,
    pub clock: ClockMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MissionMetrics>,
}

#[derive(Debug, Clone)]
struct Pending {
    decision: Decision,
    action: Action,
    wait_time: f64,
    health_delta: f64,
    time_delta: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: MissionConfig,
    stated: RewardWeights,
    clock: ClockMode,
    reveal_strategy: bool,
    field: Vec<SiteGroundTruth>,
    robot: RobotAgent,
    sites: Vec<SiteRecord>,
    phase: Phase,
    health: f64,
    /// Charged clock time, summed site by site.
    spent: f64,
    phase_started_ms: u64,
    pending: Option<Pending>,
    end: Option<(EndReason, f64)>,
    metrics: Option<MissionMetrics>,
}

impl Session {
    pub fn from_created(event: &Event) -> Result<Self> {
        let Event::Created {
            session_id,
            config,
            stated_preference,
            clock,
            reveal_strategy,
            at_ms,
        } = event
        else {
            return Err(SessionError::Inconsistent("first event must be created".into()));
        };
        config.validate()?;
        Ok(Self {
            id: session_id.clone(),
            field: config.threat_field(),
            robot: RobotAgent::new(config.robot_config())?,
            config: config.clone(),
            stated: *stated_preference,
            clock: *clock,
            reveal_strategy: *reveal_strategy,
            sites: Vec::new(),
            phase: Phase::AwaitingAction,
            health: config.health_start(),
            spent: 0.0,
            phase_started_ms: *at_ms,
            pending: None,
            end: None,
            metrics: None,
        })
    }

    /// Rebuilds a session from its full event history.
    pub fn from_events(events: &[Event]) -> Result<Self> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| SessionError::Inconsistent("empty event log".into()))?;
        let mut s = Self::from_created(first)?;
        for e in rest {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn stated_preference(&self) -> RewardWeights {
        self.stated
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.clock
    }

    pub fn robot(&self) -> &RobotAgent {
        &self.robot
    }

    pub fn sites(&self) -> &[SiteRecord] {
        &self.sites
    }

    pub fn threat_field(&self) -> &[SiteGroundTruth] {
        &self.field
    }

    pub fn health(&self) -> f64 {
        self.health
    }

    pub fn metrics(&self) -> Option<&MissionMetrics> {
        self.metrics.as_ref()
    }

    /// 1-based index of the site being played, or of the last one once finished.
    pub fn site_index(&self) -> usize {
        match self.phase {
            Phase::AwaitingAction => self.sites.len() + 1,
            Phase::AwaitingFeedback => self.sites.len() + 1,
            Phase::Finished => self.sites.len(),
        }
    }

    fn live_wait(&self, now_ms: u64) -> f64 {
        if self.clock == ClockMode::Realtime && self.phase == Phase::AwaitingAction {
            now_ms.saturating_sub(self.phase_started_ms) as f64 / 1000.0
        } else {
            0.0
        }
    }

    pub fn clock_remaining(&self, now_ms: u64) -> f64 {
        let used = match self.end {
            Some((_, trailing)) => self.spent + trailing,
            None => self.spent + self.live_wait(now_ms),
        };
        (self.config.time_budget() - used).max(0.0)
    }

    fn visible_strategy(&self) -> Option<Strategy> {
        self.reveal_strategy.then_some(self.config.strategy)
    }

    pub fn status(&self, now_ms: u64) -> Status {
        Status {
            session_id: self.id.clone(),
            phase: self.phase,
            site_index: self.site_index(),
            num_sites: self.config.num_sites,
            sites_completed: self.sites.len(),
            health: self.health,
            clock_remaining: self.clock_remaining(now_ms),
            clock: self.clock,
            strategy: self.visible_strategy(),
            metrics: self.metrics.clone(),
        }
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        match self.phase {
            p if p == expected => Ok(()),
            Phase::Finished => Err(SessionError::Finished),
            found => Err(SessionError::WrongPhase { expected, found }),
        }
    }

    fn current_truth(&self) -> &SiteGroundTruth {
        &self.field[self.sites.len()]
    }

    /// A `TimedOut` event if the real-time clock has run out.
    pub fn tick(&self, now_ms: u64) -> Option<Event> {
        let wait = self.live_wait(now_ms);
        (self.clock == ClockMode::Realtime
            && self.phase == Phase::AwaitingAction
            && self.spent + wait >= self.config.time_budget())
        .then(|| Event::TimedOut {
            site: self.sites.len() + 1,
            trailing_wait: wait,
            at_ms: now_ms,
        })
    }

    pub fn briefing(&self, now_ms: u64) -> Result<Briefing> {
        self.expect_phase(Phase::AwaitingAction)?;
        let truth = self.current_truth();
        let decision = self.robot.decide(truth.scan_level)?;
        let tb = &self.config.testbed;
        Ok(Briefing {
            site_index: decision.site_index,
            num_sites: self.config.num_sites,
            scan_level: truth.scan_level,
            recommendation: decision.recommendation(),
            avg_time_with: tb.search_time(Action::Deploy),
            avg_time_without: tb.search_time(Action::Proceed),
            health: self.health,
            clock_remaining: self.clock_remaining(now_ms),
            strategy: self.visible_strategy(),
        })
    }

    pub fn plan_action(&self, action: Action, now_ms: u64) -> Result<Event> {
        self.expect_phase(Phase::AwaitingAction)?;
        let truth = self.current_truth();
        let (health_delta, time_delta) = self.config.site_costs(action, truth.threat_present, self.health);
        Ok(Event::ActionTaken {
            site: self.sites.len() + 1,
            action,
            wait_time: self.live_wait(now_ms),
            health_delta,
            time_delta,
            at_ms: now_ms,
        })
    }

    /// Outcome of the pending site.
    pub fn outcome(&self, now_ms: u64) -> Option<ActionOutcome> {
        let p = self.pending.as_ref()?;
        let truth = self.current_truth();
        Some(ActionOutcome {
            site_index: p.decision.site_index,
            scan_level: truth.scan_level,
            recommendation: p.decision.recommendation(),
            action: p.action,
            ground_truth: truth.threat_present,
            health_delta: p.health_delta,
            time_delta: p.time_delta,
            health: self.health,
            clock_remaining: self.clock_remaining(now_ms),
        })
    }

    fn finishes_after_pending(&self) -> bool {
        self.sites.len() + 1 == self.config.num_sites || self.spent >= self.config.time_budget()
    }

    pub fn plan_feedback(&self, value: u32, now_ms: u64) -> Result<Event> {
        self.expect_phase(Phase::AwaitingFeedback)?;
        check_slider(value)?;
        let next_phase = if self.finishes_after_pending() {
            Phase::Finished
        } else {
            Phase::AwaitingAction
        };
        Ok(Event::FeedbackGiven {
            site: self.sites.len() + 1,
            value,
            next_phase,
            at_ms: now_ms,
        })
    }

    fn expect_site(&self, site: usize) -> Result<()> {
        if site != self.sites.len() + 1 {
            return Err(SessionError::Inconsistent(format!(
                "event for site {site} while at site {}",
                self.sites.len() + 1
            )));
        }
        Ok(())
    }

    fn finish(&mut self, reason: EndReason, trailing: f64) -> Result<()> {
        self.phase = Phase::Finished;
        self.end = Some((reason, trailing));
        self.metrics = if self.sites.is_empty() {
            None
        } else {
            Some(compute_metrics_with_trailing(&self.config, &self.sites, &self.stated, trailing)?)
        };
        Ok(())
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match *event {
            Event::Created { .. } => Err(SessionError::Inconsistent("duplicate created event".into())),
            Event::ActionTaken {
                site,
                action,
                wait_time,
                health_delta,
                time_delta,
                ..
            } => {
                self.expect_phase(Phase::AwaitingAction)?;
                self.expect_site(site)?;
                let truth = *self.current_truth();
                if self.config.site_costs(action, truth.threat_present, self.health) != (health_delta, time_delta) {
                    return Err(SessionError::Inconsistent(format!("site {site} costs differ")));
                }
                let simulated_wait = self.clock == ClockMode::Simulated && wait_time != 0.0;
                if simulated_wait || !(wait_time.is_finite() && wait_time >= 0.0) {
                    return Err(SessionError::Inconsistent(format!("site {site} wait time {wait_time}")));
                }
                let decision = self.robot.decide(truth.scan_level)?;
                self.health += health_delta;
                self.spent += time_delta + wait_time;
                self.pending = Some(Pending {
                    decision,
                    action,
                    wait_time,
                    health_delta,
                    time_delta,
                });
                self.phase = Phase::AwaitingFeedback;
                Ok(())
            }
            Event::FeedbackGiven {
                site,
                value,
                next_phase,
                at_ms,
            } => {
                self.expect_phase(Phase::AwaitingFeedback)?;
                self.expect_site(site)?;
                check_slider(value)?;
                let expected = if self.finishes_after_pending() {
                    Phase::Finished
                } else {
                    Phase::AwaitingAction
                };
                if expected != next_phase {
                    return Err(SessionError::Inconsistent(format!("site {site} next phase differs")));
                }
                let p = self.pending.take().expect("pending while awaiting feedback");
                let truth = *self.current_truth();
                let feedback = f64::from(value) / 100.0;
                let update = self.robot.observe(&p.decision, p.action, &truth, feedback)?;
                let perf_true = performance(
                    p.decision.recommendation(),
                    truth.threat_present,
                    &self.stated,
                    &self.config.costs,
                );
                let mut record = site_record(
                    &p.decision,
                    &truth,
                    p.action,
                    feedback,
                    update,
                    perf_true,
                    (p.health_delta, p.time_delta),
                    None,
                );
                record.wait_time = p.wait_time;
                self.sites.push(record);
                if next_phase == Phase::Finished {
                    let reason = if self.sites.len() == self.config.num_sites {
                        EndReason::AllSites
                    } else {
                        EndReason::BudgetExhausted
                    };
                    self.finish(reason, 0.0)
                } else {
                    self.phase = Phase::AwaitingAction;
                    self.phase_started_ms = at_ms;
                    Ok(())
                }
            }
            Event::TimedOut {
                site, trailing_wait, ..
            } => {
                self.expect_phase(Phase::AwaitingAction)?;
                self.expect_site(site)?;
                if self.clock != ClockMode::Realtime
                    || !(trailing_wait.is_finite() && trailing_wait >= 0.0)
                    || self.spent + trailing_wait < self.config.time_budget()
                {
                    return Err(SessionError::Inconsistent(format!("timeout at site {site} with time left")));
                }
                self.finish(EndReason::BudgetExhausted, trailing_wait)
            }
        }
    }

    /// The session as a mission log, available once finished with at least
    /// one site played.
    pub fn export(&self) -> Result<MissionLog> {
        self.expect_phase(Phase::Finished)?;
        let (Some(metrics), Some((ended, trailing_wait))) = (self.metrics.clone(), self.end) else {
            return Err(SessionError::NothingPlayed);
        };
        let mut header = LogHeader::new(self.config.clone(), self.stated, LogSource::Session, None);
        header.session_id = Some(self.id.clone());
        Ok(MissionLog {
            header,
            sites: self.sites.clone(),
            footer: Some(LogFooter {
                metrics,
                ended,
                trailing_wait,
            }),
        })
    }
}

fn check_slider(value: u32) -> Result<()> {
    if value > 100 || !value.is_multiple_of(2) {
        return Err(SessionError::invalid(
            "value",
            format!("must be an even integer in [0, 100], got {value}"),
        ));
    }
    Ok(())
}
