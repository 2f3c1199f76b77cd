//! Maximum likelihood fit of trust dynamics from reported trust.
//!
//! Given reported trust `t_1..t_n` and the performance sequence that produced
//! them, the trust state after site `i` is
//! `Beta(alpha0 + S_i * vs, beta0 + F_i * vf)` with `S_i`/`F_i` the success and
//! failure counts so far. The fit maximizes the sum of Beta log densities over
//! log-parameters, which keeps all four parameters positive, plus a weak
//! quadratic pull toward an anchor so that short histories stay identified.
//!
//! The optimizer is gradient ascent preconditioned with a BFGS inverse-Hessian
//! estimate and an Armijo backtracking line search; every accepted step
//! strictly increases the objective.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::trust::TrustDynamicsParams;

/// Reported trust are clamped into `(EPS, 1 - EPS)` before taking logs.
pub const TRUST_EPS: f64 = 1e-6;

/// One completed site as seen by the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub site_index: usize,
    pub reported_trust: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iters: usize,
    /// Stop once an accepted step improves the objective by less than this
    /// and the gradient is below `gradient_tolerance`.
    pub tolerance: f64,
    pub gradient_tolerance: f64,
    /// Weight of the quadratic penalty on log-parameters.
    pub penalty: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-8,
            gradient_tolerance: 1e-6,
            penalty: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub params: TrustDynamicsParams,
    /// Penalized objective at `params`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Obs {
    ln_t: f64,
    ln_1mt: f64,
    successes: f64,
    failures: f64,
}

/// Penalized log-likelihood as a function of log-parameters.
#[derive(Debug, Clone)]
pub struct TrustLikelihood {
    obs: Vec<Obs>,
    anchor: [f64; 4],
    penalty: f64,
}

impl TrustLikelihood {
    pub fn new(history: &[FeedbackRecord], anchor: &TrustDynamicsParams, penalty: f64) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::EmptyHistory);
        }
        for pair in history.windows(2) {
            if pair[1].site_index <= pair[0].site_index {
                return Err(Error::InvalidHistory(format!(
                    "site {} follows site {}",
                    pair[1].site_index, pair[0].site_index
                )));
            }
        }
        let mut successes = 0.0;
        let mut failures = 0.0;
        let mut obs = Vec::with_capacity(history.len());
        for r in history {
            if !r.reported_trust.is_finite() {
                return Err(Error::InvalidHistory(format!(
                    "site {} reported non-finite trust",
                    r.site_index
                )));
            }
            if r.success {
                successes += 1.0;
            } else {
                failures += 1.0;
            }
            let t = r.reported_trust.clamp(TRUST_EPS, 1.0 - TRUST_EPS);
            obs.push(Obs {
                ln_t: t.ln(),
                ln_1mt: (-t).ln_1p(),
                successes,
                failures,
            });
        }
        Ok(Self {
            obs,
            anchor: log_params(anchor),
            penalty,
        })
    }

    fn unpack(x: &[f64; 4]) -> [f64; 4] {
        [x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp()]
    }

    /// Unpenalized log-likelihood at natural parameters.
    pub fn log_likelihood(&self, theta: &[f64; 4]) -> f64 {
        self.obs
            .iter()
            .map(|o| {
                let a = theta[0] + o.successes * theta[2];
                let b = theta[1] + o.failures * theta[3];
                (a - 1.0) * o.ln_t + (b - 1.0) * o.ln_1mt - ln_gamma(a) - ln_gamma(b)
                    + ln_gamma(a + b)
            })
            .sum()
    }

    fn penalty_term(&self, x: &[f64; 4]) -> f64 {
        self.penalty
            * x.iter()
                .zip(&self.anchor)
                .map(|(xi, ai)| (xi - ai) * (xi - ai))
                .sum::<f64>()
    }

    /// Penalized objective at log-parameters `x`.
    pub fn value(&self, x: &[f64; 4]) -> f64 {
        self.log_likelihood(&Self::unpack(x)) - self.penalty_term(x)
    }

    /// Analytic gradient of [`Self::value`] with respect to `x`.
    pub fn gradient(&self, x: &[f64; 4]) -> [f64; 4] {
        let th = Self::unpack(x);
        let mut g = [0.0; 4];
        for o in &self.obs {
            let a = th[0] + o.successes * th[2];
            let b = th[1] + o.failures * th[3];
            let ab = digamma(a + b);
            let da = o.ln_t - digamma(a) + ab;
            let db = o.ln_1mt - digamma(b) + ab;
            g[0] += da;
            g[1] += db;
            g[2] += o.successes * da;
            g[3] += o.failures * db;
        }
        for k in 0..4 {
            g[k] = th[k] * g[k] - 2.0 * self.penalty * (x[k] - self.anchor[k]);
        }
        g
    }
}

fn log_params(p: &TrustDynamicsParams) -> [f64; 4] {
    let a = p.to_array();
    [a[0].ln(), a[1].ln(), a[2].ln(), a[3].ln()]
}

/// Unpenalized log-likelihood of a history under `params`.
pub fn log_likelihood(history: &[FeedbackRecord], params: &TrustDynamicsParams) -> Result<f64> {
    Ok(TrustLikelihood::new(history, params, 0.0)?.log_likelihood(&params.to_array()))
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64; 4]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn active_set(g: &[f64; 4], x: &[f64; 4]) -> [bool; 4] {
    std::array::from_fn(|k| {
        (x[k] >= LOG_BOUND - ACTIVE && g[k] > 0.0) || (x[k] <= -LOG_BOUND + ACTIVE && g[k] < 0.0)
    })
}

/// Zeroes components that push against an active bound.
fn project(v: &[f64; 4], x: &[f64; 4]) -> [f64; 4] {
    let pinned = active_set(v, x);
    std::array::from_fn(|k| if pinned[k] { 0.0 } else { v[k] })
}

fn mat_vec(m: &[[f64; 4]; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = dot(row, v);
    }
    out
}

const IDENTITY: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Largest log-space move per step; `e^2` is a factor of ~7.4.
const MAX_STEP: f64 = 2.0;
/// Log-parameters are kept in `[-LOG_BOUND, LOG_BOUND]`. Past about e^12 the
/// log-gamma terms lose too many digits to cancellation for the stopping rule.
const LOG_BOUND: f64 = 12.0;
const ARMIJO: f64 = 1e-4;
/// Distance from a bound at which a coordinate counts as pinned.
const ACTIVE: f64 = 1e-3;

/// Fits trust dynamics to a feedback history.
///
/// `init` is the starting point (e.g. the previous fit) and `anchor` the
/// point the penalty pulls toward. Non-convergence is reported through
/// [`MleFit::converged`]; the best point found is still returned.
pub fn fit_trust_params(
    history: &[FeedbackRecord],
    init: &TrustDynamicsParams,
    anchor: &TrustDynamicsParams,
    opts: &MleOptions,
) -> Result<MleFit> {
    let problem = TrustLikelihood::new(history, anchor, opts.penalty)?;
    let mut x = log_params(init);
    let mut f = problem.value(&x);
    let mut g = project(&problem.gradient(&x), &x);
    let mut h = IDENTITY;
    let mut scaled = false;
    let mut last_pinned = [false; 4];
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if inf_norm(&g) < opts.gradient_tolerance {
            converged = true;
            break;
        }
        let pinned = active_set(&problem.gradient(&x), &x);
        if pinned != last_pinned {
            h = IDENTITY;
            scaled = false;
            last_pinned = pinned;
        }
        let mut dir = project(&mat_vec(&h, &g), &x);
        let mut slope = dot(&g, &dir);
        if slope.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            h = IDENTITY;
            dir = g;
            slope = dot(&g, &g);
        }
        let len = inf_norm(&dir);
        let mut step = if len > MAX_STEP { MAX_STEP / len } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = [0.0; 4];
            for k in 0..4 {
                cand[k] = (x[k] + step * dir[k]).clamp(-LOG_BOUND, LOG_BOUND);
            }
            let fc = problem.value(&cand);
            if fc.is_finite() && fc > f && fc >= f + ARMIJO * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if h != IDENTITY {
                h = IDENTITY;
                scaled = false;
                continue;
            }
            // No ascent possible at machine precision, so the improvement is zero.
            converged = true;
            break;
        };

        iterations += 1;
        let g_new = project(&problem.gradient(&x_new), &x_new);
        let s: [f64; 4] = std::array::from_fn(|k| x_new[k] - x[k]);
        // Curvature pair for minimizing -f: y = grad(-f)_new - grad(-f)_old.
        let y: [f64; 4] = std::array::from_fn(|k| g[k] - g_new[k]);
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = if i == j { gamma } else { 0.0 };
                    }
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let improvement = f_new - f;
        debug_assert!(improvement > 0.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if improvement < opts.tolerance && inf_norm(&g) < 1e-5 {
            converged = true;
            break;
        }
    }

    let theta = TrustLikelihood::unpack(&x);
    Ok(MleFit {
        params: TrustDynamicsParams::from_array(theta)?,
        objective: f,
        iterations,
        converged,
        trace,
    })
}

fn bfgs_update(h: &mut [[f64; 4]; 4], s: &[f64; 4], y: &[f64; 4], sy: f64) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    // H' = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
    for i in 0..4 {
        for j in 0..4 {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
