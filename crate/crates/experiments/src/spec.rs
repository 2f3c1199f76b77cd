//! Sweep specifications and their expansion into cells.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use valign_core::human::ThetaSource;
use valign_core::{MissionConfig, Strategy};

use crate::error::{ExperimentError, Result};

/// How simulated humans are drawn for each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Population {
    pub theta: ThetaSource,
    pub kappa: f64,
}

impl Default for Population {
    fn default() -> Self {
        Self {
            theta: ThetaSource::default(),
            kappa: 1.0,
        }
    }
}

/// Health weights of a human population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPopulation {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub human: f64,
    pub robot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionAxes {
    pub priors: Vec<f64>,
    pub human_weights: Vec<f64>,
    pub robot_weights: Vec<f64>,
}

impl Default for RegionAxes {
    fn default() -> Self {
        Self {
            priors: vec![0.3, 0.7],
            human_weights: tenths(),
            robot_weights: tenths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreatCurveAxes {
    pub pairs: Vec<WeightPair>,
    pub priors: Vec<f64>,
}

impl Default for ThreatCurveAxes {
    fn default() -> Self {
        Self {
            pairs: vec![
                WeightPair { human: 0.8, robot: 0.2 },
                WeightPair { human: 0.5, robot: 0.5 },
                WeightPair { human: 0.95, robot: 0.95 },
            ],
            priors: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveAxes {
    /// Robot health weight of the non-adaptive baseline.
    pub baseline_weight: f64,
    /// Human weights swept at each of `weight_sweep_priors`.
    pub human_weights: Vec<f64>,
    pub weight_sweep_priors: Vec<f64>,
    /// Priors swept at each of `prior_sweep_weights`.
    pub priors: Vec<f64>,
    pub prior_sweep_weights: Vec<f64>,
}

impl Default for AdaptiveAxes {
    fn default() -> Self {
        Self {
            baseline_weight: 0.5,
            human_weights: tenths(),
            weight_sweep_priors: vec![0.3, 0.7],
            priors: tenths(),
            prior_sweep_weights: vec![0.3, 0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyAxes {
    pub prior: f64,
    pub robot_weight: f64,
    pub human_weights: WeightPopulation,
    pub strategies: Vec<Strategy>,
}

impl Default for StrategyAxes {
    fn default() -> Self {
        Self {
            prior: 0.575,
            robot_weight: 0.5,
            human_weights: WeightPopulation::Uniform { lo: 0.0, hi: 1.0 },
            strategies: vec![Strategy::NonLearner, Strategy::NonAdaptiveLearner, Strategy::AdaptiveLearner],
        }
    }
}

fn tenths() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepKind {
    Region(RegionAxes),
    ThreatCurve(ThreatCurveAxes),
    Adaptive(AdaptiveAxes),
    Strategies(StrategyAxes),
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Region(_) => "region",
            SweepKind::ThreatCurve(_) => "threat-curve",
            SweepKind::Adaptive(_) => "adaptive",
            SweepKind::Strategies(_) => "strategies",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub runs_per_cell: usize,
    pub seed_base: u64,
    /// Base mission; each cell overrides strategy, prior and robot weights.
    pub mission: MissionConfig,
    pub population: Population,
    pub sweep: SweepKind,
}

/// One configuration the human faces in a paired run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub label: String,
    pub strategy: Strategy,
    pub robot_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCoords {
    pub prior: f64,
    pub human_weight: Option<f64>,
    pub robot_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub coords: CellCoords,
    pub human_weights: WeightPopulation,
    /// Every arm sees the same human draw and threat field within a run.
    pub arms: Vec<Arm>,
}

fn in_unit(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(ExperimentError::Config(format!("{name}: {v} is outside [0, 1]"))),
        None => Ok(()),
    }
}

fn nonempty(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(ExperimentError::Config(format!("{name} is empty")));
    }
    in_unit(name, values)
}

fn non_learner(robot: f64) -> Arm {
    Arm {
        label: Strategy::NonLearner.name().into(),
        strategy: Strategy::NonLearner,
        robot_weight: robot,
    }
}

impl SweepSpec {
    pub fn new(sweep: SweepKind) -> Self {
        Self {
            runs_per_cell: 100,
            seed_base: 0,
            mission: MissionConfig::default(),
            population: Population::default(),
            sweep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs_per_cell == 0 {
            return Err(ExperimentError::Config("runs_per_cell must be at least 1".into()));
        }
        self.mission.validate()?;
        self.population.theta.validate()?;
        if !(self.population.kappa >= 0.0 && self.population.kappa.is_finite()) {
            return Err(ExperimentError::Config("population.kappa must be nonnegative".into()));
        }
        match &self.sweep {
            SweepKind::Region(a) => {
                nonempty("priors", &a.priors)?;
                nonempty("human_weights", &a.human_weights)?;
                nonempty("robot_weights", &a.robot_weights)?;
            }
            SweepKind::ThreatCurve(a) => {
                nonempty("priors", &a.priors)?;
                if a.pairs.is_empty() {
                    return Err(ExperimentError::Config("pairs is empty".into()));
                }
                let flat: Vec<f64> = a.pairs.iter().flat_map(|p| [p.human, p.robot]).collect();
                in_unit("pairs", &flat)?;
            }
            SweepKind::Adaptive(a) => {
                in_unit("baseline_weight", &[a.baseline_weight])?;
                in_unit("human_weights", &a.human_weights)?;
                in_unit("weight_sweep_priors", &a.weight_sweep_priors)?;
                in_unit("priors", &a.priors)?;
                in_unit("prior_sweep_weights", &a.prior_sweep_weights)?;
                if self.cells().is_empty() {
                    return Err(ExperimentError::Config("adaptive sweep has no cells".into()));
                }
            }
            SweepKind::Strategies(a) => {
                in_unit("prior", &[a.prior])?;
                in_unit("robot_weight", &[a.robot_weight])?;
                match a.human_weights {
                    WeightPopulation::Fixed(w) => in_unit("human_weights", &[w])?,
                    WeightPopulation::Uniform { lo, hi } => {
                        in_unit("human_weights", &[lo, hi])?;
                        if lo > hi {
                            return Err(ExperimentError::Config(format!("human_weights: [{lo}, {hi}] is empty")));
                        }
                    }
                }
                if a.strategies.is_empty() {
                    return Err(ExperimentError::Config("strategies is empty".into()));
                }
            }
        }
        Ok(())
    }

    /// Stable hash of the whole spec, used to key resumable results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    /// Cells in their canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut coords: Vec<(CellCoords, WeightPopulation, Vec<Arm>)> = Vec::new();
        match &self.sweep {
            SweepKind::Region(a) => {
                for &prior in &a.priors {
                    for &h in &a.human_weights {
                        for &r in &a.robot_weights {
                            coords.push((
                                CellCoords {
                                    prior,
                                    human_weight: Some(h),
                                    robot_weight: Some(r),
                                },
                                WeightPopulation::Fixed(h),
                                vec![non_learner(r)],
                            ));
                        }
                    }
                }
            }
            SweepKind::ThreatCurve(a) => {
                for pair in &a.pairs {
                    for &prior in &a.priors {
                        coords.push((
                            CellCoords {
                                prior,
                                human_weight: Some(pair.human),
                                robot_weight: Some(pair.robot),
                            },
                            WeightPopulation::Fixed(pair.human),
                            vec![non_learner(pair.robot)],
                        ));
                    }
                }
            }
            SweepKind::Adaptive(a) => {
                let arms = vec![
                    Arm {
                        label: "adaptive".into(),
                        strategy: Strategy::AdaptiveLearner,
                        robot_weight: a.baseline_weight,
                    },
                    Arm {
                        label: "fixed".into(),
                        strategy: Strategy::NonLearner,
                        robot_weight: a.baseline_weight,
                    },
                ];
                let mut push = |prior: f64, h: f64| {
                    coords.push((
                        CellCoords {
                            prior,
                            human_weight: Some(h),
                            robot_weight: Some(a.baseline_weight),
                        },
                        WeightPopulation::Fixed(h),
                        arms.clone(),
                    ));
                };
                for &prior in &a.weight_sweep_priors {
                    for &h in &a.human_weights {
                        push(prior, h);
                    }
                }
                for &h in &a.prior_sweep_weights {
                    for &prior in &a.priors {
                        push(prior, h);
                    }
                }
            }
            SweepKind::Strategies(a) => {
                let arms = a
                    .strategies
                    .iter()
                    .map(|&s| Arm {
                        label: s.name().into(),
                        strategy: s,
                        robot_weight: a.robot_weight,
                    })
                    .collect();
                let human_weight = match a.human_weights {
                    WeightPopulation::Fixed(w) => Some(w),
                    WeightPopulation::Uniform { .. } => None,
                };
                coords.push((
                    CellCoords {
                        prior: a.prior,
                        human_weight,
                        robot_weight: Some(a.robot_weight),
                    },
                    a.human_weights,
                    arms,
                ));
            }
        }
        coords
            .into_iter()
            .enumerate()
            .map(|(index, (coords, human_weights, arms))| Cell {
                index,
                coords,
                human_weights,
                arms,
            })
            .collect()
    }
}
