//! Mission logs: serialization and replay.
//!
//! A log file is a journal (see [`crate::journal`]) whose first line is the
//! header, followed by one line per site and, for finished missions, a
//! footer. Records are tagged by a `kind` field:
//!
//! | kind     | contents                                                   |
//! |----------|------------------------------------------------------------|
//! | `header` | schema version, full config, stated preference, source     |
//! | `site`   | every per-site quantity, including belief masses and fit   |
//! | `footer` | final metrics and why the mission ended                    |

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::journal::{decode_all, encode_all, JournalError};
use crate::mission::{compute_metrics_with_trailing, MissionConfig, MissionMetrics};
use crate::planner::QValues;
use crate::robot::RobotAgent;
use crate::trust::{performance, Action, RewardWeights, SiteGroundTruth, TrustDynamicsParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogSource {
    Simulation,
    Session,
}

/// Ground-truth parameters of a simulated human, for analysis only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSnapshot {
    pub dynamics: TrustDynamicsParams,
    pub weights: RewardWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema_version: u32,
    pub config: MissionConfig,
    pub stated_preference: RewardWeights,
    pub source: LogSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<HumanSnapshot>,
}

impl LogHeader {
    pub fn new(
        config: MissionConfig,
        stated_preference: RewardWeights,
        source: LogSource,
        human: Option<HumanSnapshot>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            stated_preference,
            source,
            session_id: None,
            human,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub index: usize,
    pub scan_level: f64,
    pub threat_present: bool,
    pub recommendation: Action,
    pub human_action: Action,
    pub perf_assessed_by_robot: bool,
    /// Performance judged with the stated preference.
    pub perf_true: bool,
    pub trust_feedback: f64,
    pub robot_trust_mean_before: f64,
    pub robot_trust_mean_after: f64,
    pub belief_mean_before: f64,
    pub belief_mean_after: f64,
    pub q_values: QValues,
    pub assessed_weights: RewardWeights,
    pub fitted_params: TrustDynamicsParams,
    pub fit_converged: bool,
    /// Weight-belief masses after the site; the grid is implied by its length.
    pub belief_masses: Vec<f64>,
    pub health_delta: f64,
    pub time_delta: f64,
    /// Clock time spent deciding before the action, when the clock runs in real time.
    #[serde(default)]
    pub wait_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_trust_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    AllSites,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub metrics: MissionMetrics,
    pub ended: EndReason,
    /// Clock time spent after the last recorded site.
    #[serde(default)]
    pub trailing_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header(LogHeader),
    Site(SiteRecord),
    Footer(LogFooter),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub header: LogHeader,
    pub sites: Vec<SiteRecord>,
    pub footer: Option<LogFooter>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("site {site}: recorded {field} does not match replay")]
    Mismatch { site: usize, field: &'static str },
    #[error("recorded metrics do not match replay")]
    MetricsMismatch,
    #[error(transparent)]
    Core(#[from] Error),
}

impl MissionLog {
    pub fn is_finished(&self) -> bool {
        self.footer.is_some()
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = Vec::with_capacity(self.sites.len() + 2);
        lines.push(LogLine::Header(self.header.clone()));
        lines.extend(self.sites.iter().cloned().map(LogLine::Site));
        if let Some(f) = &self.footer {
            lines.push(LogLine::Footer(f.clone()));
        }
        encode_all(&lines)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut lines = decode_all::<LogLine>(text)?.into_iter();
        let header = match lines.next() {
            Some(LogLine::Header(h)) => h,
            _ => {
                return Err(LogError::Structure {
                    line: 1,
                    message: "first record must be the header".into(),
                })
            }
        };
        if header.schema_version != SCHEMA_VERSION {
            return Err(LogError::SchemaVersion {
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let mut sites = Vec::new();
        let mut footer = None;
        for (i, l) in lines.enumerate() {
            let line = i + 2;
            if footer.is_some() {
                return Err(LogError::Structure {
                    line,
                    message: "record after footer".into(),
                });
            }
            match l {
                LogLine::Site(s) => sites.push(s),
                LogLine::Footer(f) => footer = Some(f),
                LogLine::Header(_) => {
                    return Err(LogError::Structure {
                        line,
                        message: "duplicate header".into(),
                    })
                }
            }
        }
        Ok(Self { header, sites, footer })
    }
}

fn check<T: PartialEq>(site: usize, field: &'static str, recorded: T, replayed: T) -> Result<(), LogError> {
    if recorded == replayed {
        Ok(())
    } else {
        Err(LogError::Mismatch { site, field })
    }
}

/// Recomputes every robot-side quantity from the recorded human inputs and
/// checks it against the log, then recomputes the metrics.
///
/// Comparisons are exact. The threat field is regenerated from the config
/// and must match the recorded one.
pub fn replay(log: &MissionLog) -> Result<MissionMetrics, LogError> {
    let config = &log.header.config;
    config.validate()?;
    let field = config.threat_field();
    if log.sites.len() > field.len() {
        return Err(LogError::Structure {
            line: field.len() + 2,
            message: "more sites than the mission has".into(),
        });
    }
    let mut robot = RobotAgent::new(config.robot_config())?;
    let mut health = config.health_start();
    let stated = log.header.stated_preference;

    for (rec, truth) in log.sites.iter().zip(&field) {
        let site = rec.index;
        check(site, "threat_present", rec.threat_present, truth.threat_present)?;
        check(site, "scan_level", rec.scan_level, truth.scan_level)?;
        if !(rec.wait_time >= 0.0 && rec.wait_time.is_finite()) {
            return Err(LogError::Mismatch { site, field: "wait_time" });
        }

        let decision = robot.decide(truth.scan_level)?;
        check(site, "index", rec.index, decision.site_index)?;
        check(site, "q_values", rec.q_values, decision.q_values)?;
        check(site, "recommendation", rec.recommendation, decision.recommendation())?;
        check(site, "assessed_weights", rec.assessed_weights, decision.assessed_weights)?;
        check(site, "robot_trust_mean_before", rec.robot_trust_mean_before, decision.trust_mean_before)?;
        check(site, "belief_mean_before", rec.belief_mean_before, decision.belief_mean_before)?;

        let (dh, dt) = config.site_costs(rec.human_action, truth.threat_present, health);
        check(site, "health_delta", rec.health_delta, dh)?;
        check(site, "time_delta", rec.time_delta, dt)?;
        health += dh;
        let perf_true = performance(decision.recommendation(), truth.threat_present, &stated, &config.costs);
        check(site, "perf_true", rec.perf_true, perf_true)?;

        let truth = SiteGroundTruth {
            threat_present: truth.threat_present,
            scan_level: truth.scan_level,
        };
        let u = robot.observe(&decision, rec.human_action, &truth, rec.trust_feedback)?;
        check(site, "perf_assessed_by_robot", rec.perf_assessed_by_robot, u.perf_assessed)?;
        check(site, "robot_trust_mean_after", rec.robot_trust_mean_after, u.trust_mean_after)?;
        check(site, "belief_mean_after", rec.belief_mean_after, u.belief_mean_after)?;
        check(site, "fitted_params", rec.fitted_params, u.fitted_params)?;
        check(site, "fit_converged", rec.fit_converged, u.fit_converged)?;
        check(site, "belief_masses", &rec.belief_masses, &u.belief_masses)?;
    }

    let trailing = log.footer.as_ref().map_or(0.0, |f| f.trailing_wait);
    if !(trailing >= 0.0 && trailing.is_finite()) {
        return Err(LogError::Structure {
            line: log.sites.len() + 2,
            message: "negative trailing wait".into(),
        });
    }
    let metrics = compute_metrics_with_trailing(config, &log.sites, &stated, trailing)?;
    if let Some(f) = &log.footer {
        if f.metrics != metrics {
            return Err(LogError::MetricsMismatch);
        }
    }
    Ok(metrics)
}
