//! Policy-gradient estimators.
//!
//! Every estimator here stores an *ascent* direction, i.e. an estimate of
//! `+grad J`. Negation into descent directions happens in `algorithms`.

use crate::error::{check_dim, Error, Result};
use crate::mdp::{discounted_return, Trajectory};
use crate::policy::SoftmaxLinearPolicy;
use crate::vecops::{axpy, norm2_sq, sub};

/// Log importance weights are clamped to `[-LOG_WEIGHT_CLAMP, LOG_WEIGHT_CLAMP]`.
pub const LOG_WEIGHT_CLAMP: f64 = 50.0;

/// `sum_t grad log pi(a_t|s_t)` along a trajectory.
pub fn score_sum(traj: &Trajectory, policy: &SoftmaxLinearPolicy) -> Vec<f64> {
    let mut acc = vec![0.0; policy.dim()];
    for step in &traj.steps {
        policy.add_score(step.state, step.action, 1.0, &mut acc);
    }
    acc
}

/// `g(tau|theta) = (sum_t grad log pi(a_t|s_t)) * R(tau)` with the full
/// discounted return.
pub fn vanilla_gradient(traj: &Trajectory, policy: &SoftmaxLinearPolicy, gamma: f64) -> Vec<f64> {
    let ret = discounted_return(traj, gamma);
    let mut g = score_sum(traj, policy);
    for v in g.iter_mut() {
        *v *= ret;
    }
    g
}

/// `acc += weight * g(tau|theta)` without allocating.
pub fn add_vanilla_gradient(
    traj: &Trajectory,
    policy: &SoftmaxLinearPolicy,
    gamma: f64,
    weight: f64,
    acc: &mut [f64],
) {
    let w = weight * discounted_return(traj, gamma);
    if w == 0.0 {
        return;
    }
    for step in &traj.steps {
        policy.add_score(step.state, step.action, w, acc);
    }
}

/// Mean of `vanilla_gradient` over a batch, summed in index order.
pub fn batch_gradient(trajs: &[Trajectory], policy: &SoftmaxLinearPolicy, gamma: f64) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::Argument("gradient batch must contain at least one trajectory".into()));
    }
    let mut acc = vec![0.0; policy.dim()];
    for t in trajs {
        axpy(&mut acc, 1.0, &vanilla_gradient(t, policy, gamma));
    }
    let n = trajs.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// `g(tau|theta_now) - g(tau|theta_prev)` on one shared trajectory: the
/// return is common, only the scores are re-evaluated.
pub fn gradient_difference(
    traj: &Trajectory,
    now: &SoftmaxLinearPolicy,
    prev: &SoftmaxLinearPolicy,
    gamma: f64,
) -> Vec<f64> {
    let ret = discounted_return(traj, gamma);
    let mut acc = vec![0.0; now.dim()];
    for step in &traj.steps {
        now.add_score(step.state, step.action, ret, &mut acc);
        prev.add_score(step.state, step.action, -ret, &mut acc);
    }
    acc
}

/// Running arithmetic mean of every gradient absorbed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoAverage {
    value: Vec<f64>,
    count: usize,
}

impl MpoAverage {
    pub fn new(dim: usize) -> Self {
        Self {
            value: vec![0.0; dim],
            count: 0,
        }
    }

    /// `g_hat_k = g_hat_{k-1} + (g_k - g_hat_{k-1}) / k`.
    pub fn absorb(&mut self, g: &[f64]) -> Result<()> {
        check_dim(self.value.len(), g.len(), "absorbed gradient")?;
        self.count += 1;
        let k = self.count as f64;
        for (v, gi) in self.value.iter_mut().zip(g) {
            *v += (gi - *v) / k;
        }
        Ok(())
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Recursive (SARAH-style) estimate: a batch estimate at the epoch start,
/// then same-trajectory score-difference corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct VrmpoRecursive {
    value: Vec<f64>,
    count: usize,
    prev_theta: Vec<f64>,
}

impl VrmpoRecursive {
    /// Batch mean of `g(tau_i|theta)` over trajectories drawn under `policy`.
    pub fn init(trajs: &[Trajectory], policy: &SoftmaxLinearPolicy, gamma: f64) -> Result<Self> {
        let value = batch_gradient(trajs, policy, gamma)?;
        Ok(Self {
            value,
            count: trajs.len(),
            prev_theta: policy.theta().to_vec(),
        })
    }

    /// `G <- G + mean_j [g(tau_j|theta_t) - g(tau_j|theta_{t-1})]` with
    /// `tau_j ~ pi_{theta_t}` and `theta_{t-1}` the parameters of the previous call.
    pub fn update(&mut self, trajs: &[Trajectory], policy_now: &SoftmaxLinearPolicy, gamma: f64) -> Result<()> {
        check_dim(self.value.len(), policy_now.dim(), "recursive estimator vs policy")?;
        if trajs.is_empty() {
            return Err(Error::Argument("recursive update needs at least one trajectory".into()));
        }
        let prev = policy_now.with_theta(self.prev_theta.clone())?;
        let mut correction = vec![0.0; self.value.len()];
        for t in trajs {
            axpy(&mut correction, 1.0, &gradient_difference(t, policy_now, &prev, gamma));
        }
        let n = trajs.len() as f64;
        for (v, c) in self.value.iter_mut().zip(&correction) {
            *v += c / n;
        }
        self.count += trajs.len();
        self.prev_theta = policy_now.theta().to_vec();
        Ok(())
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Parameters at which the last batch was drawn.
    pub fn prev_theta(&self) -> &[f64] {
        &self.prev_theta
    }
}

/// Importance-sampling variance-reduced estimate anchored at a snapshot.
///
/// `G_t = mu + mean_j [g(tau_j|theta_t) - w(tau_j) g(tau_j|theta_0)]` with
/// `mu` the batch gradient at the snapshot `theta_0`, `tau_j ~ pi_{theta_t}` and
/// `w(tau) = prod_h pi_{theta_0}(a_h|s_h) / pi_{theta_t}(a_h|s_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrpgEstimator {
    value: Vec<f64>,
    count: usize,
    anchor_theta: Vec<f64>,
    anchor_value: Vec<f64>,
    clamp_events: usize,
}

impl SvrpgEstimator {
    pub fn init(trajs: &[Trajectory], anchor: &SoftmaxLinearPolicy, gamma: f64) -> Result<Self> {
        let anchor_value = batch_gradient(trajs, anchor, gamma)?;
        Ok(Self {
            value: anchor_value.clone(),
            count: trajs.len(),
            anchor_theta: anchor.theta().to_vec(),
            anchor_value,
            clamp_events: 0,
        })
    }

    pub fn update(&mut self, trajs: &[Trajectory], policy_now: &SoftmaxLinearPolicy, gamma: f64) -> Result<()> {
        check_dim(self.value.len(), policy_now.dim(), "importance-sampling estimator vs policy")?;
        if trajs.is_empty() {
            return Err(Error::Argument("importance-sampling update needs at least one trajectory".into()));
        }
        let anchor = policy_now.with_theta(self.anchor_theta.clone())?;
        let mut correction = vec![0.0; self.value.len()];
        for t in trajs {
            let w = importance_weight(t, &anchor, policy_now)?;
            if w.clamped {
                self.clamp_events += 1;
                log::warn!("importance weight clamped (log weight {:.3})", w.log_weight);
            }
            axpy(&mut correction, 1.0, &vanilla_gradient(t, policy_now, gamma));
            axpy(&mut correction, -w.weight, &vanilla_gradient(t, &anchor, gamma));
        }
        let n = trajs.len() as f64;
        self.value = self
            .anchor_value
            .iter()
            .zip(&correction)
            .map(|(a, c)| a + c / n)
            .collect();
        self.count += trajs.len();
        Ok(())
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn anchor_theta(&self) -> &[f64] {
        &self.anchor_theta
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceWeight {
    pub weight: f64,
    /// Unclamped log weight.
    pub log_weight: f64,
    pub clamped: bool,
}

/// `prod_h pi_target(a_h|s_h) / pi_behaviour(a_h|s_h)` accumulated in log space.
pub fn importance_weight(
    traj: &Trajectory,
    target: &SoftmaxLinearPolicy,
    behaviour: &SoftmaxLinearPolicy,
) -> Result<ImportanceWeight> {
    let mut log_weight = 0.0;
    for s in &traj.steps {
        let lb = behaviour.log_prob(s.state, s.action);
        if !lb.is_finite() {
            return Err(Error::Numeric(format!(
                "action {} has zero probability in state {} under the sampling policy",
                s.action, s.state
            )));
        }
        log_weight += target.log_prob(s.state, s.action) - lb;
    }
    let clamped_log = log_weight.clamp(-LOG_WEIGHT_CLAMP, LOG_WEIGHT_CLAMP);
    Ok(ImportanceWeight {
        weight: clamped_log.exp(),
        log_weight,
        clamped: clamped_log != log_weight,
    })
}

/// `||g(tau|theta) - grad J(theta)||^2` for a known exact gradient.
pub fn estimator_deviation(traj: &Trajectory, policy: &SoftmaxLinearPolicy, gamma: f64, exact_grad: &[f64]) -> f64 {
    norm2_sq(&sub(&vanilla_gradient(traj, policy, gamma), exact_grad))
}

/// Triangle-inequality bound `(2 (H + 1) G_norm R_abs_max)^2` on the squared
/// deviation, with `G_norm = max ||grad log pi||_2`, `H` a uniform horizon
/// bound and `R_abs_max` a bound on `|R(tau)|`.
pub fn triangle_deviation_bound(horizon: usize, score_norm: f64, return_abs_max: f64) -> f64 {
    let b = 2.0 * (horizon as f64 + 1.0) * score_norm * return_abs_max;
    b * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Vanilla,
    MpoAverage,
    VrmpoRecursive,
    SvrpgIs,
}

/// Any of the estimators, for code that is generic over the kind.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorState {
    Vanilla { value: Vec<f64> },
    MpoAverage(MpoAverage),
    VrmpoRecursive(VrmpoRecursive),
    SvrpgIs(SvrpgEstimator),
}

impl EstimatorState {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorState::Vanilla { .. } => EstimatorKind::Vanilla,
            EstimatorState::MpoAverage(_) => EstimatorKind::MpoAverage,
            EstimatorState::VrmpoRecursive(_) => EstimatorKind::VrmpoRecursive,
            EstimatorState::SvrpgIs(_) => EstimatorKind::SvrpgIs,
        }
    }

    pub fn value(&self) -> &[f64] {
        match self {
            EstimatorState::Vanilla { value } => value,
            EstimatorState::MpoAverage(s) => s.value(),
            EstimatorState::VrmpoRecursive(s) => s.value(),
            EstimatorState::SvrpgIs(s) => s.value(),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            EstimatorState::Vanilla { .. } => 1,
            EstimatorState::MpoAverage(s) => s.count(),
            EstimatorState::VrmpoRecursive(s) => s.count(),
            EstimatorState::SvrpgIs(s) => s.count(),
        }
    }
}
