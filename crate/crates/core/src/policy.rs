//! Soft-max policies over linear features.
//!
//! `pi(a|s) = exp(phi(s,a)^T theta) / sum_b exp(phi(s,b)^T theta)`. Tabular
//! one-hot features are the special case `FeatureMap::tabular`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::mdp::{corridor, Mdp};
use crate::vecops::{all_finite, dot, norm2};

/// Feature vectors `phi(s, a)` for every nonterminal state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// `[s][a][k]` flattened.
    phi: Vec<f64>,
}

impl FeatureMap {
    pub fn new(features: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let num_states = features.len();
        if num_states == 0 || features[0].is_empty() {
            return Err(Error::Argument("feature map needs at least one state and one action".into()));
        }
        let num_actions = features[0].len();
        let dim = features[0][0].len();
        if dim == 0 {
            return Err(Error::Argument("feature dimension must be positive".into()));
        }
        let mut phi = Vec::with_capacity(num_states * num_actions * dim);
        for per_state in &features {
            check_dim(num_actions, per_state.len(), "feature actions per state")?;
            for v in per_state {
                check_dim(dim, v.len(), "feature vector length")?;
                if !all_finite(v) {
                    return Err(Error::Argument("feature vectors must be finite".into()));
                }
                phi.extend_from_slice(v);
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            phi,
        })
    }

    /// One-hot features, one component per `(s, a)` pair.
    pub fn tabular(num_states: usize, num_actions: usize) -> Self {
        let dim = num_states * num_actions;
        let mut phi = vec![0.0; num_states * num_actions * dim];
        for i in 0..dim {
            phi[i * dim + i] = 1.0;
        }
        Self {
            num_states,
            num_actions,
            dim,
            phi,
        }
    }

    /// State-independent corridor features: `phi(s, right) = [1, 0]`,
    /// `phi(s, left) = [0, 1]`.
    pub fn short_corridor() -> Self {
        let mut features = vec![vec![Vec::new(); 2]; corridor::NUM_STATES];
        for per_state in features.iter_mut() {
            per_state[corridor::RIGHT] = vec![1.0, 0.0];
            per_state[corridor::LEFT] = vec![0.0, 1.0];
        }
        Self::new(features).expect("corridor features are well formed")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.dim;
        &self.phi[start..start + self.dim]
    }

    /// `max |phi_k(s, a)|` over everything.
    pub fn max_abs(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Parameter vector plus a shared feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinearPolicy {
    theta: Vec<f64>,
    features: Arc<FeatureMap>,
}

impl SoftmaxLinearPolicy {
    pub fn new(features: Arc<FeatureMap>, theta: Vec<f64>) -> Result<Self> {
        check_dim(features.dim(), theta.len(), "theta vs feature dimension")?;
        if !all_finite(&theta) {
            return Err(Error::Numeric("theta has non-finite components".into()));
        }
        Ok(Self { theta, features })
    }

    pub fn zeros(features: Arc<FeatureMap>) -> Self {
        let theta = vec![0.0; features.dim()];
        Self { theta, features }
    }

    /// Draws every component of theta independently from `U[lo, hi]`.
    pub fn uniform_init<R: Rng + ?Sized>(features: Arc<FeatureMap>, range: (f64, f64), rng: &mut R) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Argument(format!("invalid init range [{lo}, {hi}]")));
        }
        let theta = (0..features.dim())
            .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
            .collect();
        Ok(Self { theta, features })
    }

    /// Same features, new parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.features), theta)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn check_compatible(&self, mdp: &Mdp) -> Result<()> {
        check_dim(mdp.num_states(), self.features.num_states(), "feature map states vs MDP")?;
        check_dim(mdp.num_actions(), self.features.num_actions(), "feature map actions vs MDP")
    }

    fn logits_into(&self, state: usize, out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(self.features.get(state, a), &self.theta);
        }
    }

    /// Writes `pi(.|s)` into `out` (length `num_actions`). Uses max-subtraction
    /// so large logits do not overflow.
    pub fn action_probabilities_into(&self, state: usize, out: &mut [f64]) {
        self.logits_into(state, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn action_probabilities(&self, state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.features.num_actions()];
        self.action_probabilities_into(state, &mut out);
        out
    }

    /// `log pi(a|s)` via log-sum-exp.
    pub fn log_prob(&self, state: usize, action: usize) -> f64 {
        let mut logits = vec![0.0; self.features.num_actions()];
        self.logits_into(state, &mut logits);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits[action] - lse
    }

    /// Expected feature vector `sum_a pi(a|s) phi(s, a)`.
    pub fn mean_feature(&self, state: usize) -> Vec<f64> {
        let probs = self.action_probabilities(state);
        let mut mean = vec![0.0; self.dim()];
        for (a, p) in probs.iter().enumerate() {
            for (m, f) in mean.iter_mut().zip(self.features.get(state, a)) {
                *m += p * f;
            }
        }
        mean
    }

    /// Score function `grad_theta log pi(a|s) = phi(s,a) - E_pi[phi(s,.)]`.
    pub fn score(&self, state: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_score(state, action, 1.0, &mut out);
        out
    }

    /// `acc += weight * score(s, a)` without allocating the score itself.
    pub fn add_score(&self, state: usize, action: usize, weight: f64, acc: &mut [f64]) {
        let na = self.features.num_actions();
        let mut probs = [0.0f64; 8];
        let mut heap;
        let probs: &mut [f64] = if na <= probs.len() {
            &mut probs[..na]
        } else {
            heap = vec![0.0; na];
            &mut heap
        };
        self.action_probabilities_into(state, probs);
        for (k, acc_k) in acc.iter_mut().enumerate() {
            let mean: f64 = probs
                .iter()
                .enumerate()
                .map(|(b, p)| p * self.features.get(state, b)[k])
                .sum();
            *acc_k += weight * (self.features.get(state, action)[k] - mean);
        }
    }

    /// Hessian of `log pi(a|s)`; it equals minus the feature covariance under
    /// `pi(.|s)` and does not depend on `a`.
    pub fn log_prob_hessian(&self, state: usize) -> Vec<Vec<f64>> {
        let probs = self.action_probabilities(state);
        let mean = self.mean_feature(state);
        let d = self.dim();
        let mut h = vec![vec![0.0; d]; d];
        for (a, p) in probs.iter().enumerate() {
            let phi = self.features.get(state, a);
            for i in 0..d {
                for j in 0..d {
                    h[i][j] -= p * (phi[i] - mean[i]) * (phi[j] - mean[j]);
                }
            }
        }
        h
    }

    /// `max_{s,a} ||score(s, a)||_2` at the current parameters.
    pub fn max_score_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for s in 0..self.features.num_states() {
            for a in 0..self.features.num_actions() {
                best = best.max(norm2(&self.score(s, a)));
            }
        }
        best
    }
}

/// Smoothness and deviation constants of the policy class on an MDP.
///
/// These are measured diagnostics: `g_bound` and `f_bound` are analytic sup
/// bounds over all of parameter space, `g_grid`/`f_grid` are maxima over a
/// finite parameter grid (see [`assumption_grid`]).
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionConstants {
    /// Per-component bound on `|d/dtheta_i log pi(a|s)|`, `2 * max|phi|`.
    pub g_bound: f64,
    /// Per-component bound on second partials, `max|phi|^2`.
    pub f_bound: f64,
    pub g_grid: f64,
    pub f_grid: f64,
    /// `R H (H G^2 + F) / (1 - gamma)`; `None` at `gamma = 1`.
    pub lipschitz: Option<f64>,
    /// `G^2 R^2 / (1 - gamma)^4`; `None` at `gamma = 1`.
    pub sigma_sq: Option<f64>,
}

impl fmt::Display for AssumptionConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |x: Option<f64>| x.map_or_else(|| "undefined (gamma = 1)".to_string(), |v| format!("{v:.6e}"));
        write!(
            f,
            "G <= {:.6} (grid {:.6}), F <= {:.6} (grid {:.6}), L = {}, sigma^2 = {}",
            self.g_bound,
            self.g_grid,
            self.f_bound,
            self.f_grid,
            show(self.lipschitz),
            show(self.sigma_sq)
        )
    }
}

/// Smoothness constant of `grad J` for reward bound `r`, horizon `h` and score
/// bounds `g`, `f`. Undefined at `gamma = 1`.
pub fn smoothness_constant(r: f64, h: f64, g: f64, f: f64, gamma: f64) -> Option<f64> {
    (gamma < 1.0).then(|| r * h * (h * g * g + f) / (1.0 - gamma))
}

/// Uniform bound on `||g(tau|theta) - grad J(theta)||^2`. Undefined at `gamma = 1`.
pub fn deviation_bound_sq(g: f64, r: f64, gamma: f64) -> Option<f64> {
    (gamma < 1.0).then(|| g * g * r * r / (1.0 - gamma).powi(4))
}

/// Parameter grid used for the grid estimates of `G` and `F`: the product grid
/// `{-2, -1, 0, 1, 2}^d` when it has at most 5^5 points, otherwise the axis
/// points `±c e_k` for `c` in `{1, 2}` plus the origin.
pub fn assumption_grid(dim: usize) -> Vec<Vec<f64>> {
    const LEVELS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
    if dim <= 5 {
        let mut grid = vec![Vec::new()];
        for _ in 0..dim {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    LEVELS.iter().map(move |&l| {
                        let mut p = prefix.clone();
                        p.push(l);
                        p
                    })
                })
                .collect();
        }
        grid
    } else {
        let mut grid = vec![vec![0.0; dim]];
        for k in 0..dim {
            for &c in &[-2.0, -1.0, 1.0, 2.0] {
                let mut p = vec![0.0; dim];
                p[k] = c;
                grid.push(p);
            }
        }
        grid
    }
}

pub fn assumption_constants(policy: &SoftmaxLinearPolicy, mdp: &Mdp) -> Result<AssumptionConstants> {
    policy.check_compatible(mdp)?;
    let features = policy.features();
    let phi_max = features.max_abs();
    let g_bound = 2.0 * phi_max;
    let f_bound = phi_max * phi_max;

    let mut g_grid: f64 = 0.0;
    let mut f_grid: f64 = 0.0;
    for theta in assumption_grid(features.dim()) {
        let p = policy.with_theta(theta)?;
        for s in 0..features.num_states() {
            for a in 0..features.num_actions() {
                g_grid = g_grid.max(crate::vecops::norm_inf(&p.score(s, a)));
            }
            for row in p.log_prob_hessian(s) {
                f_grid = f_grid.max(crate::vecops::norm_inf(&row));
            }
        }
    }

    let r = mdp.r_max();
    let h = mdp.h_max() as f64;
    Ok(AssumptionConstants {
        g_bound,
        f_bound,
        g_grid,
        f_grid,
        lipschitz: smoothness_constant(r, h, g_bound, f_bound, mdp.gamma()),
        sigma_sq: deviation_bound_sq(g_bound, r, mdp.gamma()),
    })
}
