//! Human choice model and the simulated human.
//!
//! A human follows the recommendation with probability `t + (1 - t) p`,
//! where `t` is trust and `p` is the softmax ("Boltzmann") probability the
//! human would pick the recommended action on expected rewards alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, Error, Result};
use crate::trust::{
    expected_reward_unchecked, performance, Action, BetaTrustState, CostTable, RewardWeights,
    SiteGroundTruth, TrustDynamicsParams,
};

/// Softmax choice model over expected rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    /// Rationality coefficient; 0 is a uniformly random chooser.
    pub kappa: f64,
    pub weights: RewardWeights,
}

impl BehaviorModel {
    pub fn new(kappa: f64, weights: RewardWeights) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::OutOfRange {
                name: "kappa",
                value: kappa,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self { kappa, weights })
    }
}

/// Probability of choosing `action` on expected rewards alone.
pub fn boltzmann_prob(
    model: &BehaviorModel,
    action: Action,
    threat_prob: f64,
    costs: &CostTable,
) -> Result<f64> {
    check_unit("threat probability", threat_prob)?;
    Ok(boltzmann_unchecked(
        model.kappa,
        &model.weights,
        action,
        threat_prob,
        costs,
    ))
}

pub(crate) fn boltzmann_unchecked(
    kappa: f64,
    weights: &RewardWeights,
    action: Action,
    threat_prob: f64,
    costs: &CostTable,
) -> f64 {
    let ea = expected_reward_unchecked(weights, action, threat_prob, costs);
    let eb = expected_reward_unchecked(weights, action.complement(), threat_prob, costs);
    logistic(kappa * (ea - eb))
}

/// `1 / (1 + e^-x)` evaluated without overflow: the max exponent is
/// subtracted before exponentiating.
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Follow/defect probabilities for one recommendation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compliance {
    pub follow: f64,
    pub defect: f64,
}

pub fn compliance_pmf(trust: f64, p_accept: f64) -> Result<Compliance> {
    let t = check_unit("trust", trust)?;
    let p = check_unit("acceptance probability", p_accept)?;
    Ok(compliance_unchecked(t, p))
}

pub(crate) fn compliance_unchecked(t: f64, p: f64) -> Compliance {
    Compliance {
        follow: t + (1.0 - t) * p,
        defect: (1.0 - t) * (1.0 - p),
    }
}

/// What the human sees before choosing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanBriefing {
    pub scan_level: f64,
    pub recommendation: Action,
}

/// A participant in a mission: only actions and trust reports are visible.
pub trait HumanAgent {
    fn choose_action(&mut self, briefing: &HumanBriefing) -> Action;

    /// Called once the site's ground truth is revealed; returns reported
    /// trust in `[0, 1]`.
    fn report_trust(&mut self, recommendation: Action, truth: &SiteGroundTruth) -> f64;

    /// Internal trust mean, for lab instrumentation only.
    fn internal_trust_mean(&self) -> Option<f64> {
        None
    }
}

/// Simulated participant with hidden trust dynamics and reward weights.
#[derive(Debug, Clone)]
pub struct SimulatedHuman {
    dynamics: TrustDynamicsParams,
    true_weights: RewardWeights,
    kappa: f64,
    costs: CostTable,
    trust: BetaTrustState,
    last_feedback: Option<f64>,
    rng: ChaCha8Rng,
}

impl SimulatedHuman {
    pub const DEFAULT_KAPPA: f64 = 1.0;

    pub fn new(dynamics: TrustDynamicsParams, true_weights: RewardWeights, seed: u64) -> Self {
        Self {
            dynamics,
            true_weights,
            kappa: Self::DEFAULT_KAPPA,
            costs: CostTable::default(),
            trust: dynamics.initial_state(),
            last_feedback: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = BehaviorModel::new(kappa, self.true_weights)?.kappa;
        Ok(self)
    }

    pub fn with_costs(mut self, costs: CostTable) -> Self {
        self.costs = costs;
        self
    }

    pub fn true_weights(&self) -> RewardWeights {
        self.true_weights
    }

    pub fn dynamics(&self) -> TrustDynamicsParams {
        self.dynamics
    }

    pub fn trust_state(&self) -> BetaTrustState {
        self.trust
    }

    /// Scalar trust driving the next choice: the latest reported feedback,
    /// or the Beta mean before any feedback.
    pub fn current_trust(&self) -> f64 {
        self.last_feedback.unwrap_or_else(|| self.trust.mean())
    }

    pub fn sample_action(&mut self, recommendation: Action, threat_prob: f64) -> Result<Action> {
        check_unit("threat probability", threat_prob)?;
        let p = boltzmann_unchecked(
            self.kappa,
            &self.true_weights,
            recommendation,
            threat_prob,
            &self.costs,
        );
        let c = compliance_unchecked(self.current_trust().clamp(0.0, 1.0), p);
        let u: f64 = self.rng.random();
        Ok(if u < c.follow {
            recommendation
        } else {
            recommendation.complement()
        })
    }

    /// Judges the recommendation on observed rewards, advances its own trust
    /// and samples one trust report from the updated distribution.
    pub fn sample_trust_feedback(&mut self, recommendation: Action, threat_present: bool) -> f64 {
        let success = performance(recommendation, threat_present, &self.true_weights, &self.costs);
        self.trust = self.trust.updated(success, &self.dynamics);
        let t = self.trust.sample(&mut self.rng);
        self.last_feedback = Some(t);
        t
    }
}

impl HumanAgent for SimulatedHuman {
    fn choose_action(&mut self, briefing: &HumanBriefing) -> Action {
        let p = briefing.scan_level.clamp(0.0, 1.0);
        self.sample_action(briefing.recommendation, p)
            .expect("clamped threat probability")
    }

    fn report_trust(&mut self, recommendation: Action, truth: &SiteGroundTruth) -> f64 {
        self.sample_trust_feedback(recommendation, truth.threat_present)
    }

    fn internal_trust_mean(&self) -> Option<f64> {
        Some(self.trust.mean())
    }
}

/// Log-uniform sampler for synthetic trust dynamics.
///
/// Stands in for an empirically fitted parameter set, which can be supplied
/// through [`ThetaSource::Empirical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogUniformTheta {
    pub initial: (f64, f64),
    pub gains: (f64, f64),
}

impl Default for LogUniformTheta {
    fn default() -> Self {
        Self {
            initial: (1.0, 100.0),
            gains: (1.0, 50.0),
        }
    }
}

impl LogUniformTheta {
    fn draw_range<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            return lo;
        }
        let (a, b) = (lo.ln(), hi.ln());
        (a + (b - a) * rng.random::<f64>()).exp()
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.initial, self.gains] {
            check_positive("theta range bound", lo)?;
            check_positive("theta range bound", hi)?;
            if lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "theta range [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrustDynamicsParams {
        let a0 = Self::draw_range(rng, self.initial);
        let b0 = Self::draw_range(rng, self.initial);
        let vs = Self::draw_range(rng, self.gains);
        let vf = Self::draw_range(rng, self.gains);
        TrustDynamicsParams::new(a0, b0, vs, vf).expect("positive ranges")
    }
}

/// Where simulated humans get their trust dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    Synthetic(LogUniformTheta),
    /// Uniform draw from a fixed set of parameter vectors.
    Empirical(Vec<TrustDynamicsParams>),
    Fixed(TrustDynamicsParams),
}

impl Default for ThetaSource {
    fn default() -> Self {
        ThetaSource::Synthetic(LogUniformTheta::default())
    }
}

impl ThetaSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            ThetaSource::Synthetic(s) => s.validate(),
            ThetaSource::Empirical(v) if v.is_empty() => {
                Err(Error::InvalidConfig("empirical theta set is empty".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TrustDynamicsParams {
        match self {
            ThetaSource::Synthetic(s) => s.sample(rng),
            ThetaSource::Empirical(v) => v[rng.random_range(0..v.len())],
            ThetaSource::Fixed(p) => *p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(h: f64) -> RewardWeights {
        RewardWeights::new(h).unwrap()
    }

    fn model(kappa: f64, h: f64) -> BehaviorModel {
        BehaviorModel::new(kappa, w(h)).unwrap()
    }

    #[test]
    fn boltzmann_examples() {
        let c = CostTable::default();
        for a in Action::BOTH {
            for p in [0.0, 0.3, 1.0] {
                assert_eq!(boltzmann_prob(&model(0.0, 0.8), a, p, &c).unwrap(), 0.5);
            }
        }
        let p0 = boltzmann_prob(&model(1.0, 0.5), Action::Proceed, 0.5, &c).unwrap();
        let by_hand = 1.0 / (1.0 + (-2.5f64).exp());
        assert!((p0 - by_hand).abs() < 1e-12);
        assert!((p0 - 0.9241).abs() < 1e-4);
        assert!(boltzmann_prob(&model(1.0, 0.5), Action::Proceed, 1.5, &c).is_err());
    }

    #[test]
    fn boltzmann_large_kappa_is_finite() {
        let c = CostTable::default();
        for kappa in [1e3, 1e5] {
            let p = boltzmann_prob(&model(kappa, 0.9), Action::Proceed, 0.9, &c).unwrap();
            let q = boltzmann_prob(&model(kappa, 0.9), Action::Deploy, 0.9, &c).unwrap();
            assert!(p.is_finite() && q.is_finite());
            assert!(p < 1e-12 && q > 1.0 - 1e-12);
        }
    }

    #[test]
    fn compliance_examples() {
        let c = compliance_pmf(1.0, 0.2).unwrap();
        assert_eq!((c.follow, c.defect), (1.0, 0.0));
        let c = compliance_pmf(0.6, 0.9).unwrap();
        assert!((c.follow - 0.96).abs() < 1e-12 && (c.defect - 0.04).abs() < 1e-12);
        let c = compliance_pmf(0.0, 0.37).unwrap();
        assert_eq!((c.follow, c.defect), (0.37, 0.63));
        assert!(compliance_pmf(1.1, 0.5).is_err());
        assert!(compliance_pmf(0.5, -0.1).is_err());
    }

    #[test]
    fn full_trust_always_follows() {
        // Beta(1e9, 1e-9) has mean 1 to machine precision.
        let dyn_ = TrustDynamicsParams::new(1e12, 1e-9, 1.0, 1.0).unwrap();
        let mut h = SimulatedHuman::new(dyn_, w(0.9), 3);
        for i in 0..1000 {
            let rec = if i % 2 == 0 { Action::Proceed } else { Action::Deploy };
            assert_eq!(h.sample_action(rec, 0.95).unwrap(), rec);
        }
    }

    #[test]
    fn rational_zero_trust_picks_argmax() {
        let dyn_ = TrustDynamicsParams::new(1e-9, 1e12, 1.0, 1.0).unwrap();
        let mut h = SimulatedHuman::new(dyn_, w(0.8), 4).with_kappa(1e6).unwrap();
        for _ in 0..500 {
            // At p = 0.9 proceeding costs 7.2 in expectation, deploying costs 2.
            assert_eq!(h.sample_action(Action::Proceed, 0.9).unwrap(), Action::Deploy);
            assert_eq!(h.sample_action(Action::Deploy, 0.05).unwrap(), Action::Proceed);
        }
    }

    #[test]
    fn empirical_follow_rate_matches_pmf() {
        // Choose kappa and threat level so that p_accept = 0.9 exactly:
        // wh = 0.5, p = 0.5 gives E0 - E1 = 2.5, so kappa = logit(0.9) / 2.5.
        let kappa = (0.9f64 / 0.1).ln() / 2.5;
        let c = CostTable::default();
        let m = model(kappa, 0.5);
        assert!((boltzmann_prob(&m, Action::Proceed, 0.5, &c).unwrap() - 0.9).abs() < 1e-12);
        // Trust 0.6 as a (near) point mass.
        let dyn_ = TrustDynamicsParams::new(0.6e12, 0.4e12, 1.0, 1.0).unwrap();
        let mut h = SimulatedHuman::new(dyn_, w(0.5), 11).with_kappa(kappa).unwrap();
        let n = 100_000;
        let follows = (0..n)
            .filter(|_| h.sample_action(Action::Proceed, 0.5).unwrap() == Action::Proceed)
            .count();
        let rate = follows as f64 / n as f64;
        assert!((rate - 0.96).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn feedback_concentrated_beta() {
        let s = BetaTrustState::new(1e6, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(s.sample(&mut rng) > 0.99);
        }
    }

    #[test]
    fn feedback_sample_mean() {
        let s = BetaTrustState::new(10.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 10.0 / 15.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn feedback_uniform_ks() {
        let s = BetaTrustState::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at alpha = 0.01.
        let crit = 1.628 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn feedback_advances_internal_state_by_own_judgment() {
        let dyn_ = TrustDynamicsParams::new(2.0, 2.0, 5.0, 7.0).unwrap();
        let mut h = SimulatedHuman::new(dyn_, w(0.8), 9);
        // Deploying against a real threat is a success for wh = 0.8.
        h.sample_trust_feedback(Action::Deploy, true);
        assert_eq!(h.trust_state(), BetaTrustState::new(7.0, 2.0).unwrap());
        // Proceeding into a threat is a failure.
        h.sample_trust_feedback(Action::Proceed, true);
        assert_eq!(h.trust_state(), BetaTrustState::new(7.0, 9.0).unwrap());
        assert_eq!(h.current_trust(), h.last_feedback.unwrap());
    }

    #[test]
    fn same_seed_same_human_stream() {
        let dyn_ = TrustDynamicsParams::new(3.0, 4.0, 5.0, 6.0).unwrap();
        let run = |seed| {
            let mut h = SimulatedHuman::new(dyn_, w(0.6), seed);
            (0..20)
                .map(|i| {
                    let a = h.sample_action(Action::Proceed, 0.4).unwrap();
                    let t = h.sample_trust_feedback(a, i % 3 == 0);
                    (a, t.to_bits())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn theta_sampler_stays_in_range() {
        let s = LogUniformTheta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let t = s.sample(&mut rng);
            assert!((1.0..=100.0).contains(&t.alpha0) && (1.0..=100.0).contains(&t.beta0));
            assert!((1.0..=50.0).contains(&t.success_gain));
            assert!((1.0..=50.0).contains(&t.failure_gain));
        }
        assert!(ThetaSource::Empirical(vec![]).validate().is_err());
    }

    proptest! {
        #[test]
        fn compliance_is_pmf(t in 0.0..=1.0f64, p in 0.0..=1.0f64) {
            let c = compliance_pmf(t, p).unwrap();
            prop_assert!(c.follow >= 0.0 && c.defect >= 0.0);
            prop_assert!((c.follow + c.defect - 1.0).abs() < 1e-12);
        }

        #[test]
        fn boltzmann_sums_to_one(k in 0.0..50.0f64, h in 0.0..=1.0f64, p in 0.0..=1.0f64) {
            let c = CostTable::default();
            let m = model(k, h);
            let s = boltzmann_prob(&m, Action::Proceed, p, &c).unwrap()
                + boltzmann_prob(&m, Action::Deploy, p, &c).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn logistic_shift_invariant_and_monotone(k in 0.01..20.0f64, ea in -20.0..0.0f64,
                                                  eb in -20.0..0.0f64, shift in -30.0..30.0f64, bump in 0.01..5.0f64) {
            // Softmax over two rewards only sees their difference.
            let softmax = |a: f64, b: f64| {
                let m = (k * a).max(k * b);
                (k * a - m).exp() / ((k * a - m).exp() + (k * b - m).exp())
            };
            let base = logistic(k * (ea - eb));
            prop_assert!((base - softmax(ea, eb)).abs() < 1e-12);
            prop_assert!((logistic(k * ((ea + shift) - (eb + shift))) - base).abs() < 1e-9);
            prop_assert!(logistic(k * (ea + bump - eb)) >= base);
        }
    }
}
