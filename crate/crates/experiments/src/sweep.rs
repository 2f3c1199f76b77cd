//! Running cells and runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use valign_core::seed::stream;
use valign_core::{mix_seed, run_simulated_mission, MissionConfig, MissionMetrics, RewardWeights, SimulatedHuman, TrustDynamicsParams};

use crate::error::Result;
use crate::spec::{Cell, CellCoords, SweepSpec, WeightPopulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub human_weight: f64,
    pub theta: TrustDynamicsParams,
    /// One entry per arm, in arm order.
    pub arms: Vec<MissionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub coords: CellCoords,
    pub arm_labels: Vec<String>,
    pub runs: Vec<RunOutcome>,
}

impl CellResult {
    /// Values of one metric for one arm, in run order.
    pub fn column(&self, arm: usize, f: impl Fn(&MissionMetrics) -> f64) -> Vec<f64> {
        self.runs.iter().map(|r| f(&r.arms[arm])).collect()
    }

    pub fn arm_index(&self, label: &str) -> Option<usize> {
        self.arm_labels.iter().position(|l| l == label)
    }
}

/// Seed shared by every arm of one run.
pub fn run_seed(seed_base: u64, cell: usize, run: usize) -> u64 {
    mix_seed(&[seed_base, cell as u64, run as u64])
}

/// Identifies a cell's random streams in the manifest.
pub fn cell_seed(seed_base: u64, cell: usize) -> u64 {
    mix_seed(&[seed_base, cell as u64])
}

fn draw_weight(pop: &WeightPopulation, seed: u64) -> f64 {
    match *pop {
        WeightPopulation::Fixed(w) => w,
        WeightPopulation::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream::HUMAN_WEIGHTS]));
            lo + (hi - lo) * rng.random::<f64>()
        }
    }
}

pub fn run_one(spec: &SweepSpec, cell: &Cell, run: usize) -> Result<RunOutcome> {
    let seed = run_seed(spec.seed_base, cell.index, run);
    let mut theta_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream::THETA]));
    let theta = spec.population.theta.draw(&mut theta_rng);
    let human_weight = draw_weight(&cell.human_weights, seed);
    let weights = RewardWeights::new(human_weight)?;
    let mission_seed = mix_seed(&[seed, stream::MISSION]);
    let human_seed = mix_seed(&[seed, stream::HUMAN]);

    let arms = cell
        .arms
        .iter()
        .map(|arm| {
            let config = MissionConfig {
                prior_threat: cell.coords.prior,
                strategy: arm.strategy,
                robot_fixed_weights: RewardWeights::new(arm.robot_weight)?,
                seed: mission_seed,
                ..spec.mission.clone()
            };
            let human = SimulatedHuman::new(theta, weights, human_seed)
                .with_kappa(spec.population.kappa)?
                .with_costs(spec.mission.costs);
            let log = run_simulated_mission(&config, human)?;
            Ok(log.footer.expect("simulated missions finish").metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        run,
        human_weight,
        theta,
        arms,
    })
}

pub fn run_cell(spec: &SweepSpec, cell: &Cell) -> Result<CellResult> {
    let runs = (0..spec.runs_per_cell)
        .into_par_iter()
        .map(|run| run_one(spec, cell, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        index: cell.index,
        coords: cell.coords,
        arm_labels: cell.arms.iter().map(|a| a.label.clone()).collect(),
        runs,
    })
}

/// Runs every cell in the current rayon pool, without persistence.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    spec.cells().par_iter().map(|c| run_cell(spec, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{RegionAxes, SweepKind};

    #[test]
    fn single_cell_equals_direct_missions() {
        let mut spec = SweepSpec::new(SweepKind::Region(RegionAxes {
            priors: vec![0.4],
            human_weights: vec![0.6],
            robot_weights: vec![0.3],
        }));
        spec.runs_per_cell = 4;
        spec.mission.num_sites = 10;
        let result = run_sweep(&spec).unwrap();
        assert_eq!(result.len(), 1);
        for (run, outcome) in result[0].runs.iter().enumerate() {
            let seed = run_seed(0, 0, run);
            let theta = spec
                .population
                .theta
                .draw(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stream::THETA])));
            let config = MissionConfig {
                prior_threat: 0.4,
                robot_fixed_weights: RewardWeights::new(0.3).unwrap(),
                seed: mix_seed(&[seed, stream::MISSION]),
                ..spec.mission.clone()
            };
            let human = SimulatedHuman::new(theta, RewardWeights::new(0.6).unwrap(), mix_seed(&[seed, stream::HUMAN]));
            let direct = run_simulated_mission(&config, human).unwrap().footer.unwrap().metrics;
            assert_eq!(outcome.arms[0], direct);
        }
    }

    #[test]
    fn uniform_population_draws_in_range() {
        let pop = WeightPopulation::Uniform { lo: 0.2, hi: 0.4 };
        for s in 0..100 {
            let w = draw_weight(&pop, s);
            assert!((0.2..=0.4).contains(&w));
        }
        assert_eq!(draw_weight(&WeightPopulation::Fixed(0.3), 5), 0.3);
    }
}
