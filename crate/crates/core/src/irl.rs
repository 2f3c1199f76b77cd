//! Discrete Bayesian belief over the human's health weight.
//!
//! After each site the robot observes whether the human followed its
//! recommendation and reweights every candidate `w` by the behavior model's
//! probability of that observation:
//!
//! - follow: `t + (1 - t) p(w)`
//! - defect: `(1 - t)(1 - p(w))`, where `(1 - t)` is common to all candidates
//!   and cancels under normalisation
//!
//! with `p(w)` the softmax probability of the recommended action under
//! weights `(w, 1 - w)`.


use crate::error::{check_unit, Error, Result};
use crate::human::boltzmann_unchecked;
use crate::trust::{Action, CostTable, RewardWeights};

pub const DEFAULT_GRID_SIZE: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBelief {
    grid: Vec<f64>,
    mass: Vec<f64>,
}

/// Inputs common to both update branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub trust_estimate: f64,
    pub recommendation: Action,
    pub threat_prob: f64,
    pub kappa: f64,
}

impl WeightBelief {
    /// Evenly spaced grid on `[0, 1]` with equal masses.
    pub fn uniform(grid_size: usize) -> Result<Self> {
        if grid_size < 2 {
            return Err(Error::GridTooSmall(grid_size));
        }
        let n = grid_size - 1;
        let grid = (0..grid_size).map(|i| i as f64 / n as f64).collect();
        let mass = vec![1.0 / grid_size as f64; grid_size];
        Ok(Self { grid, mass })
    }

    pub fn from_parts(grid: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if grid.len() != mass.len() {
            return Err(Error::InvalidBelief(format!(
                "{} grid points but {} masses",
                grid.len(),
                mass.len()
            )));
        }
        if grid.is_empty() {
            return Err(Error::GridTooSmall(0));
        }
        if grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::InvalidBelief("grid is not strictly increasing".into()));
        }
        for &g in &grid {
            check_unit("grid point", g)?;
        }
        if mass.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidBelief("masses must be finite and nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidBelief(format!("masses sum to {total}")));
        }
        Ok(Self { grid, mass })
    }

    /// All mass on the grid point closest to `w`.
    pub fn point_mass(grid_size: usize, w: f64) -> Result<Self> {
        check_unit("weight", w)?;
        let mut b = Self::uniform(grid_size)?;
        let idx = b
            .grid
            .iter()
            .enumerate()
            .min_by(|a, c| (a.1 - w).abs().total_cmp(&(c.1 - w).abs()))
            .map(|(i, _)| i)
            .expect("nonempty grid");
        b.mass.iter_mut().for_each(|m| *m = 0.0);
        b.mass[idx] = 1.0;
        Ok(b)
    }

    /// Same grid as `self` with new masses (e.g. when replaying a snapshot).
    pub fn with_masses(&self, mass: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.grid.clone(), mass)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Posterior mean health weight.
    pub fn mean_weight(&self) -> f64 {
        self.grid.iter().zip(&self.mass).map(|(g, m)| g * m).sum()
    }

    /// Posterior mean as reward weights (time weight is the complement).
    pub fn mean_weights(&self) -> RewardWeights {
        RewardWeights::new(self.mean_weight().clamp(0.0, 1.0)).expect("clamped")
    }

    pub fn update_on_follow(&self, obs: &Observation, costs: &CostTable) -> Result<Self> {
        let t = check_unit("trust estimate", obs.trust_estimate)?;
        check_unit("threat probability", obs.threat_prob)?;
        self.reweight(|w| t + (1.0 - t) * self.accept_prob(w, obs, costs))
    }

    pub fn update_on_defect(&self, obs: &Observation, costs: &CostTable) -> Result<Self> {
        let t = check_unit("trust estimate", obs.trust_estimate)?;
        check_unit("threat probability", obs.threat_prob)?;
        if t >= 1.0 {
            return Err(Error::DefectAtFullTrust);
        }
        self.reweight(|w| 1.0 - self.accept_prob(w, obs, costs))
    }

    /// Dispatches on whether the human took the recommended action.
    pub fn update(&self, obs: &Observation, human_action: Action, costs: &CostTable) -> Result<Self> {
        if human_action == obs.recommendation {
            self.update_on_follow(obs, costs)
        } else {
            self.update_on_defect(obs, costs)
        }
    }

    fn accept_prob(&self, w: f64, obs: &Observation, costs: &CostTable) -> f64 {
        let weights = RewardWeights::new(w).expect("grid points lie in [0, 1]");
        boltzmann_unchecked(obs.kappa, &weights, obs.recommendation, obs.threat_prob, costs)
    }

    /// Multiplies masses by `likelihood(w)` in log space and renormalises
    /// with one exponentiation.
    fn reweight(&self, likelihood: impl Fn(f64) -> f64) -> Result<Self> {
        let log_lik: Vec<f64> = self.grid.iter().map(|&w| likelihood(w).ln()).collect();
        // A constant likelihood leaves the posterior unchanged.
        if log_lik.iter().all(|l| *l == log_lik[0]) {
            if log_lik[0] == f64::NEG_INFINITY {
                return Err(Error::DegeneratePosterior);
            }
            return Ok(self.clone());
        }
        let log_post: Vec<f64> = self
            .mass
            .iter()
            .zip(&log_lik)
            .map(|(m, l)| if *m > 0.0 { m.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior);
        }
        let unnorm: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        Ok(Self {
            grid: self.grid.clone(),
            mass: unnorm.into_iter().map(|u| u / total).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::human::{boltzmann_prob, BehaviorModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(t: f64, rec: Action, p: f64, kappa: f64) -> Observation {
        Observation {
            trust_estimate: t,
            recommendation: rec,
            threat_prob: p,
            kappa,
        }
    }

    fn p_accept(w: f64, rec: Action, p: f64) -> f64 {
        let m = BehaviorModel::new(1.0, RewardWeights::new(w).unwrap()).unwrap();
        boltzmann_prob(&m, rec, p, &CostTable::default()).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let b = WeightBelief::uniform(101).unwrap();
        assert_eq!(b.grid().len(), 101);
        assert_eq!(b.grid()[0], 0.0);
        assert_eq!(b.grid()[100], 1.0);
        assert!((b.grid()[37] - 0.37).abs() < 1e-15);
        assert!(b.masses().iter().all(|m| *m == 1.0 / 101.0));
        for n in [2, 3, 10, 101, 1000] {
            let b = WeightBelief::uniform(n).unwrap();
            assert!((b.mean_weight() - 0.5).abs() < 1e-12);
            assert!((b.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(WeightBelief::uniform(1), Err(Error::GridTooSmall(1)));
    }

    #[test]
    fn mean_examples() {
        assert!((WeightBelief::point_mass(101, 0.7).unwrap().mean_weight() - 0.7).abs() < 1e-15);
        let b = WeightBelief::from_parts(vec![0.2, 0.6], vec![0.25, 0.75]).unwrap();
        assert!((b.mean_weight() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn follow_at_full_trust_is_noop() {
        let b = WeightBelief::from_parts(vec![0.1, 0.4, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        let c = CostTable::default();
        let post = b.update_on_follow(&obs(1.0, Action::Deploy, 0.8, 1.0), &c).unwrap();
        assert_eq!(post, b);
    }

    #[test]
    fn follow_at_zero_trust_is_boltzmann() {
        let b = WeightBelief::uniform(11).unwrap();
        let c = CostTable::default();
        let post = b.update_on_follow(&obs(0.0, Action::Deploy, 0.6, 1.0), &c).unwrap();
        let lik: Vec<f64> = b.grid().iter().map(|&w| p_accept(w, Action::Deploy, 0.6)).collect();
        let z: f64 = lik.iter().sum();
        for (m, l) in post.masses().iter().zip(&lik) {
            assert!((m - l / z).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_follow_by_hand() {
        let b = WeightBelief::from_parts(vec![0.3, 0.7], vec![0.5, 0.5]).unwrap();
        let c = CostTable::default();
        let post = b.update_on_follow(&obs(0.5, Action::Deploy, 0.9, 1.0), &c).unwrap();
        // E[R(1)] - E[R(0)] = 19w - 10 at p = 0.9.
        let p_lo = 1.0 / (1.0 + (-(19.0 * 0.3 - 10.0f64)).exp());
        let p_hi = 1.0 / (1.0 + (-(19.0 * 0.7 - 10.0f64)).exp());
        let l_lo = 0.5 + 0.5 * p_lo;
        let l_hi = 0.5 + 0.5 * p_hi;
        assert!((post.masses()[0] - l_lo / (l_lo + l_hi)).abs() < 1e-12);
        assert!((post.masses()[1] - l_hi / (l_lo + l_hi)).abs() < 1e-12);
        assert!(post.masses()[1] > post.masses()[0]);
    }

    #[test]
    fn defect_is_independent_of_trust() {
        let b = WeightBelief::uniform(21).unwrap();
        let c = CostTable::default();
        let base = b.update_on_defect(&obs(0.0, Action::Proceed, 0.7, 1.0), &c).unwrap();
        for t in [0.1, 0.5, 0.99, 0.999999] {
            assert_eq!(b.update_on_defect(&obs(t, Action::Proceed, 0.7, 1.0), &c).unwrap(), base);
        }
        assert_eq!(
            b.update_on_defect(&obs(1.0, Action::Proceed, 0.7, 1.0), &c),
            Err(Error::DefectAtFullTrust)
        );
    }

    #[test]
    fn defect_with_random_human_is_uninformative() {
        let b = WeightBelief::from_parts(vec![0.2, 0.5, 0.8], vec![0.1, 0.6, 0.3]).unwrap();
        let c = CostTable::default();
        let post = b.update_on_defect(&obs(0.3, Action::Deploy, 0.4, 0.0), &c).unwrap();
        assert_eq!(post, b);
    }

    #[test]
    fn defect_from_risky_recommendation_favours_health() {
        let b = WeightBelief::from_parts(vec![0.3, 0.7], vec![0.5, 0.5]).unwrap();
        let c = CostTable::default();
        let post = b.update_on_defect(&obs(0.4, Action::Proceed, 0.9, 1.0), &c).unwrap();
        assert!(post.masses()[1] > post.masses()[0]);
        let ratio = (1.0 - p_accept(0.7, Action::Proceed, 0.9)) / (1.0 - p_accept(0.3, Action::Proceed, 0.9));
        assert!((post.masses()[1] / post.masses()[0] - ratio).abs() < 1e-9 * ratio);
    }

    #[test]
    fn zero_prior_stays_zero() {
        let b = WeightBelief::from_parts(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.5]).unwrap();
        let c = CostTable::default();
        let post = b.update_on_follow(&obs(0.2, Action::Deploy, 0.9, 1.0), &c).unwrap();
        assert_eq!(post.masses()[0], 0.0);
    }

    #[test]
    fn boltzmann_consistency_stress() {
        let truth = 0.7;
        let mut b = WeightBelief::uniform(101).unwrap();
        let c = CostTable::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p1 = p_accept(truth, Action::Deploy, 0.9);
        for i in 0..500 {
            let rec = if i % 2 == 0 { Action::Proceed } else { Action::Deploy };
            let chosen = if rng.random_bool(p1) { Action::Deploy } else { Action::Proceed };
            b = b.update(&obs(0.0, rec, 0.9, 1.0), chosen, &c).unwrap();
        }
        assert!((b.mean_weight() - 0.7).abs() < 0.05, "{}", b.mean_weight());
    }

    #[test]
    fn many_updates_stay_normalised() {
        let mut b = WeightBelief::uniform(101).unwrap();
        let c = CostTable::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let o = obs(
                rng.random_range(0.0..0.99),
                if rng.random_bool(0.5) { Action::Deploy } else { Action::Proceed },
                rng.random(),
                rng.random_range(0.0..3.0),
            );
            let a = if rng.random_bool(0.7) { o.recommendation } else { o.recommendation.complement() };
            b = b.update(&o, a, &c).unwrap();
            assert!((b.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn from_parts_validation() {
        assert!(WeightBelief::from_parts(vec![0.1, 0.1], vec![0.5, 0.5]).is_err());
        assert!(WeightBelief::from_parts(vec![0.1, 0.2], vec![0.5]).is_err());
        assert!(WeightBelief::from_parts(vec![0.1, 0.2], vec![0.5, 0.6]).is_err());
        assert!(WeightBelief::from_parts(vec![0.1, 1.2], vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn updates_commute(t1 in 0.0..0.95f64, t2 in 0.0..0.95f64, p1 in 0.0..=1.0f64, p2 in 0.0..=1.0f64,
                           f1: bool, f2: bool, k in 0.0..5.0f64) {
            let b = WeightBelief::uniform(51).unwrap();
            let c = CostTable::default();
            let o1 = obs(t1, Action::Deploy, p1, k);
            let o2 = obs(t2, Action::Proceed, p2, k);
            let a1 = if f1 { Action::Deploy } else { Action::Proceed };
            let a2 = if f2 { Action::Proceed } else { Action::Deploy };
            let x = b.update(&o1, a1, &c).unwrap().update(&o2, a2, &c).unwrap();
            let y = b.update(&o2, a2, &c).unwrap().update(&o1, a1, &c).unwrap();
            for (m, n) in x.masses().iter().zip(y.masses()) {
                prop_assert!((m - n).abs() < 1e-12);
            }
        }
    }
}
