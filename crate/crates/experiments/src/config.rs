//! Configuration files.
//!
//! A TOML file holds shared settings plus one optional table per sweep kind:
//!
//! ```toml
//! runs_per_cell = 100
//! seed_base = 7
//!
//! [mission]
//! num_sites = 40
//!
//! [population]
//! kappa = 1.0
//!
//! [region]
//! priors = [0.3, 0.7]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use valign_core::MissionConfig;

use crate::error::{ExperimentError, Result};
use crate::spec::{AdaptiveAxes, Population, RegionAxes, StrategyAxes, SweepKind, SweepSpec, ThreatCurveAxes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub runs_per_cell: usize,
    pub seed_base: u64,
    pub mission: MissionConfig,
    pub population: Population,
    pub region: RegionAxes,
    pub threat_curve: ThreatCurveAxes,
    pub adaptive: AdaptiveAxes,
    pub strategies: StrategyAxes,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            runs_per_cell: 100,
            seed_base: 0,
            mission: MissionConfig::default(),
            population: Population::default(),
            region: RegionAxes::default(),
            threat_curve: ThreatCurveAxes::default(),
            adaptive: AdaptiveAxes::default(),
            strategies: StrategyAxes::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Region,
    ThreatCurve,
    Adaptive,
    Strategies,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn spec(&self, kind: Kind) -> SweepSpec {
        let sweep = match kind {
            Kind::Region => SweepKind::Region(self.region.clone()),
            Kind::ThreatCurve => SweepKind::ThreatCurve(self.threat_curve.clone()),
            Kind::Adaptive => SweepKind::Adaptive(self.adaptive.clone()),
            Kind::Strategies => SweepKind::Strategies(self.strategies.clone()),
        };
        SweepSpec {
            runs_per_cell: self.runs_per_cell,
            seed_base: self.seed_base,
            mission: self.mission.clone(),
            population: self.population.clone(),
            sweep,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use valign_core::Strategy;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(ConfigFile::parse("").unwrap(), ConfigFile::default());
    }

    #[test]
    fn partial_tables_merge_with_defaults() {
        let c = ConfigFile::parse(
            r#"
            runs_per_cell = 5
            [mission]
            num_sites = 12
            threat_field = "exact_count"
            [population.theta.fixed]
            alpha0 = 3.0
            beta0 = 4.0
            success_gain = 2.0
            failure_gain = 1.0
            [region]
            priors = [0.5]
            [strategies]
            strategies = ["adaptive-learner"]
            human_weights = { fixed = 0.7 }
            "#,
        )
        .unwrap();
        assert_eq!(c.runs_per_cell, 5);
        assert_eq!(c.mission.num_sites, 12);
        assert_eq!(c.mission.prior_threat, 0.575);
        assert_eq!(c.region.priors, vec![0.5]);
        assert_eq!(c.region.human_weights.len(), 9);
        assert_eq!(c.strategies.strategies, vec![Strategy::AdaptiveLearner]);
        let spec = c.spec(Kind::Region);
        assert_eq!(spec.cells().len(), 81);
        spec.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse("runs = 3").is_err());
        assert!(ConfigFile::parse("[mission]\nnum_sites = -1").is_err());
    }
}
