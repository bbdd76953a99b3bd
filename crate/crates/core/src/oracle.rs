//! Exact reference computations on small MDPs: trajectory enumeration,
//! policy evaluation by linear solve, analytic and finite-difference
//! gradients, and exact estimator moments.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::estimators::{add_vanilla_gradient, EstimatorKind};
use crate::mdp::{corridor, make_short_corridor, Mdp, Step, Trajectory};
use crate::policy::{FeatureMap, SoftmaxLinearPolicy};
use crate::vecops::{axpy, norm2, norm2_sq, sub};

/// Default central finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Work budget for enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationLimits {
    /// Longest trajectory kept; mass still alive after this many steps goes
    /// to the tail.
    pub horizon_cap: usize,
    /// Prefixes with probability below this are dropped into the tail.
    pub prune_below: f64,
    /// Hard limit on visited prefixes.
    pub max_nodes: usize,
}

impl EnumerationLimits {
    pub const DEFAULT_MAX_NODES: usize = 10_000_000;
    pub const DEFAULT_PRUNE: f64 = 1e-12;

    pub fn new(horizon_cap: usize) -> Self {
        Self {
            horizon_cap,
            prune_below: Self::DEFAULT_PRUNE,
            max_nodes: Self::DEFAULT_MAX_NODES,
        }
    }

    /// No pruning: every prefix is expanded up to the cap.
    pub fn exhaustive(horizon_cap: usize) -> Self {
        Self {
            prune_below: 0.0,
            ..Self::new(horizon_cap)
        }
    }
}

/// Summary of a streamed enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationStats {
    /// Probability of all emitted (terminated) trajectories.
    pub covered_mass: f64,
    /// Mass that did not terminate within the cap or was pruned.
    pub tail_mass: f64,
    pub nodes: usize,
    pub trajectories: usize,
}

/// All trajectories that terminate within the cap, with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedDistribution {
    pub entries: Vec<(Trajectory, f64)>,
    pub tail_mass: f64,
    pub horizon_cap: usize,
    pub nodes: usize,
}

impl EnumeratedDistribution {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// `sum_tau P(tau) R(tau)`.
    pub fn expected_return(&self, gamma: f64) -> f64 {
        self.entries.iter().map(|(t, p)| p * t.discounted_return(gamma)).sum()
    }
}

/// Depth-first enumeration that hands every terminated trajectory and its
/// probability to `visit`, without materialising the list.
pub fn for_each_trajectory<F>(
    mdp: &Mdp,
    policy: &SoftmaxLinearPolicy,
    limits: EnumerationLimits,
    mut visit: F,
) -> Result<EnumerationStats>
where
    F: FnMut(&Trajectory, f64),
{
    policy.check_compatible(mdp)?;
    if limits.horizon_cap == 0 {
        return Err(Error::Argument("horizon_cap must be at least 1".into()));
    }
    if limits.prune_below <= 0.0 {
        let branching = branching_factor(mdp) as f64;
        let bound = branching.powi(limits.horizon_cap as i32);
        if bound > limits.max_nodes as f64 {
            return Err(Error::Capacity(format!(
                "exhaustive enumeration needs up to {bound:.3e} prefixes (branching {branching}, cap {}), limit {}",
                limits.horizon_cap, limits.max_nodes
            )));
        }
    }
    let pi: Vec<Vec<f64>> = (0..mdp.num_states()).map(|s| policy.action_probabilities(s)).collect();
    let mut walk = Walk {
        mdp,
        pi: &pi,
        limits,
        path: Trajectory::default(),
        stats: EnumerationStats {
            covered_mass: 0.0,
            tail_mass: 0.0,
            nodes: 0,
            trajectories: 0,
        },
    };
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 > 0.0 {
            walk.expand(s0, p0, &mut visit)?;
        }
    }
    Ok(walk.stats)
}

struct Walk<'a> {
    mdp: &'a Mdp,
    pi: &'a [Vec<f64>],
    limits: EnumerationLimits,
    path: Trajectory,
    stats: EnumerationStats,
}

impl Walk<'_> {
    /// Prefixes expanded plus trajectories visited must stay within `max_nodes`.
    fn check_budget(&self) -> Result<()> {
        if self.stats.nodes + self.stats.trajectories > self.limits.max_nodes {
            return Err(Error::Capacity(format!(
                "enumeration visited more than {} prefixes and trajectories (cap {}, prune below {:e})",
                self.limits.max_nodes, self.limits.horizon_cap, self.limits.prune_below
            )));
        }
        Ok(())
    }

    fn expand<F: FnMut(&Trajectory, f64)>(&mut self, state: usize, prob: f64, visit: &mut F) -> Result<()> {
        self.stats.nodes += 1;
        self.check_budget()?;
        let depth = self.path.steps.len() + 1;
        for action in 0..self.mdp.num_actions() {
            let pa = prob * self.pi[state][action];
            if pa == 0.0 {
                continue;
            }
            let reward = self.mdp.reward(state, action);
            self.path.steps.push(Step { state, action, reward });
            for (next, &pt) in self.mdp.transition_row(state, action).iter().enumerate() {
                if pt == 0.0 {
                    continue;
                }
                let child = pa * pt;
                if self.mdp.is_terminal(next) {
                    self.stats.covered_mass += child;
                    self.stats.trajectories += 1;
                    self.check_budget()?;
                    visit(&self.path, child);
                } else if depth >= self.limits.horizon_cap || child < self.limits.prune_below {
                    self.stats.tail_mass += child;
                } else {
                    self.expand(next, child, visit)?;
                }
            }
            self.path.steps.pop();
        }
        Ok(())
    }
}

fn branching_factor(mdp: &Mdp) -> usize {
    let mut best = 1;
    for s in 0..mdp.num_states() {
        let mut width = 0;
        for a in 0..mdp.num_actions() {
            width += mdp.transition_row(s, a).iter().filter(|&&p| p > 0.0).count();
        }
        best = best.max(width);
    }
    best
}

/// Materialised enumeration with default pruning.
pub fn enumerate_trajectories(
    mdp: &Mdp,
    policy: &SoftmaxLinearPolicy,
    horizon_cap: usize,
) -> Result<EnumeratedDistribution> {
    enumerate_with(mdp, policy, EnumerationLimits::new(horizon_cap))
}

pub fn enumerate_with(
    mdp: &Mdp,
    policy: &SoftmaxLinearPolicy,
    limits: EnumerationLimits,
) -> Result<EnumeratedDistribution> {
    let mut entries = Vec::new();
    let stats = for_each_trajectory(mdp, policy, limits, |t, p| entries.push((t.clone(), p)))?;
    Ok(EnumeratedDistribution {
        entries,
        tail_mass: stats.tail_mass,
        horizon_cap: limits.horizon_cap,
        nodes: stats.nodes,
    })
}

/// `rho_0(s_0) prod_t pi(a_t|s_t) P(s_{t+1}|s_t, a_t)`, ending in the terminal
/// state after the last step.
pub fn trajectory_probability(mdp: &Mdp, policy: &SoftmaxLinearPolicy, traj: &Trajectory) -> Result<f64> {
    let Some(first) = traj.steps.first() else {
        return Ok(0.0);
    };
    let mut p = mdp.initial_dist()[first.state];
    for (i, step) in traj.steps.iter().enumerate() {
        let next = traj.steps.get(i + 1).map_or(mdp.terminal(), |s| s.state);
        p *= policy.log_prob(step.state, step.action).exp() * mdp.transition_row(step.state, step.action)[next];
    }
    Ok(p)
}

/// Action distributions of the policy at every nonterminal state.
pub fn policy_table(policy: &SoftmaxLinearPolicy, num_states: usize) -> Vec<Vec<f64>> {
    (0..num_states).map(|s| policy.action_probabilities(s)).collect()
}

struct Evaluation {
    /// `I - gamma P_pi` over nonterminal states.
    system: DMatrix<f64>,
    values: DVector<f64>,
}

fn evaluate(mdp: &Mdp, pi: &[Vec<f64>]) -> Result<Evaluation> {
    let n = mdp.num_states();
    check_dim(n, pi.len(), "policy table rows")?;
    for row in pi {
        check_dim(mdp.num_actions(), row.len(), "policy table actions")?;
    }
    let gamma = mdp.gamma();
    let mut p_pi = DMatrix::<f64>::zeros(n, n);
    let mut r_pi = DVector::<f64>::zeros(n);
    let mut exits = vec![0.0; n];
    for s in 0..n {
        for (a, &pa) in pi[s].iter().enumerate() {
            r_pi[s] += pa * mdp.reward(s, a);
            let row = mdp.transition_row(s, a);
            for s2 in 0..n {
                p_pi[(s, s2)] += pa * row[s2];
            }
            exits[s] += pa * row[mdp.terminal()];
        }
    }
    if gamma == 1.0 {
        check_absorbing(&p_pi, &exits)?;
    }
    let system = DMatrix::<f64>::identity(n, n) - p_pi * gamma;
    let values = system
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Divergence("policy evaluation system is singular".into()))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("policy evaluation produced non-finite values".into()));
    }
    Ok(Evaluation { system, values })
}

// At gamma = 1 the values are finite iff every state can reach the terminal
// state, i.e. the substochastic matrix has spectral radius below one.
fn check_absorbing(p_pi: &DMatrix<f64>, exits: &[f64]) -> Result<()> {
    let n = exits.len();
    let mut reaches: Vec<bool> = exits.iter().map(|&e| e > 0.0).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !reaches[s] && (0..n).any(|s2| reaches[s2] && p_pi[(s, s2)] > 0.0) {
                reaches[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if let Some(s) = reaches.iter().position(|&r| !r) {
        return Err(Error::Divergence(format!(
            "state {s} never reaches the terminal state at gamma = 1"
        )));
    }
    Ok(())
}

/// State values `V(s)` of a fixed action table, by solving `(I - gamma P) V = r`.
pub fn policy_evaluation(mdp: &Mdp, pi: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(evaluate(mdp, pi)?.values.iter().copied().collect())
}

/// `J(theta) = sum_s rho_0(s) V(s)`.
pub fn exact_return(mdp: &Mdp, policy: &SoftmaxLinearPolicy) -> Result<f64> {
    policy.check_compatible(mdp)?;
    let v = policy_evaluation(mdp, &policy_table(policy, mdp.num_states()))?;
    Ok(mdp.initial_dist().iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// `J(theta)` by enumeration; differs from the linear solve by the tail.
pub fn enumerated_return(mdp: &Mdp, policy: &SoftmaxLinearPolicy, limits: EnumerationLimits) -> Result<(f64, f64)> {
    let gamma = mdp.gamma();
    let mut total = 0.0;
    let stats = for_each_trajectory(mdp, policy, limits, |t, p| total += p * t.discounted_return(gamma))?;
    Ok((total, stats.tail_mass))
}

/// `sum_tau P(tau|theta) g(tau|theta)` over the enumeration.
pub fn exact_gradient(mdp: &Mdp, policy: &SoftmaxLinearPolicy, horizon_cap: usize) -> Result<Vec<f64>> {
    exact_gradient_with(mdp, policy, EnumerationLimits::new(horizon_cap))
}

pub fn exact_gradient_with(mdp: &Mdp, policy: &SoftmaxLinearPolicy, limits: EnumerationLimits) -> Result<Vec<f64>> {
    let gamma = mdp.gamma();
    let mut acc = vec![0.0; policy.dim()];
    for_each_trajectory(mdp, policy, limits, |t, p| add_vanilla_gradient(t, policy, gamma, p, &mut acc))?;
    Ok(acc)
}

/// `grad J = sum_s d(s) sum_a pi(a|s) Q(s, a) grad log pi(a|s)` with the
/// discounted visitation `d = rho_0^T (I - gamma P_pi)^{-1}`.
pub fn analytic_gradient(mdp: &Mdp, policy: &SoftmaxLinearPolicy) -> Result<Vec<f64>> {
    policy.check_compatible(mdp)?;
    let n = mdp.num_states();
    let pi = policy_table(policy, n);
    let eval = evaluate(mdp, &pi)?;
    let rho = DVector::from_column_slice(mdp.initial_dist());
    let visitation = eval
        .system
        .transpose()
        .lu()
        .solve(&rho)
        .ok_or_else(|| Error::Divergence("visitation system is singular".into()))?;
    let gamma = mdp.gamma();
    let mut grad = vec![0.0; policy.dim()];
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let row = mdp.transition_row(s, a);
            let q = mdp.reward(s, a) + gamma * (0..n).map(|s2| row[s2] * eval.values[s2]).sum::<f64>();
            policy.add_score(s, a, visitation[s] * pi[s][a] * q, &mut grad);
        }
    }
    Ok(grad)
}

/// Central differences of `f` at `theta`, one component at a time.
pub fn finite_difference<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut x = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        x[i] = theta[i] + h;
        let up = f(&x)?;
        x[i] = theta[i] - h;
        let down = f(&x)?;
        x[i] = theta[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Finite-difference gradient of the exact return.
pub fn fd_return_gradient(mdp: &Mdp, policy: &SoftmaxLinearPolicy, h: f64) -> Result<Vec<f64>> {
    finite_difference(|th| exact_return(mdp, &policy.with_theta(th.to_vec())?), policy.theta(), h)
}

/// Exact mean and central second moment `E||X - E X||^2` of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub second_central_moment: f64,
}

impl Moments {
    /// `E||X - target||^2 = central moment + ||mean - target||^2`.
    pub fn mean_squared_error(&self, target: &[f64]) -> f64 {
        self.second_central_moment + norm2_sq(&sub(&self.mean, target))
    }
}

// Mean and central second moment of a per-trajectory vector under pi_theta.
// `f` writes the vector into a zeroed scratch buffer.
fn draw_moments<F>(mdp: &Mdp, policy: &SoftmaxLinearPolicy, limits: EnumerationLimits, mut f: F) -> Result<Moments>
where
    F: FnMut(&Trajectory, &mut [f64]),
{
    let mut mean = vec![0.0; policy.dim()];
    let mut scratch = vec![0.0; policy.dim()];
    let mut raw_sq = 0.0;
    let mut mass = 0.0;
    for_each_trajectory(mdp, policy, limits, |t, p| {
        scratch.iter_mut().for_each(|x| *x = 0.0);
        f(t, &mut scratch);
        axpy(&mut mean, p, &scratch);
        raw_sq += p * norm2_sq(&scratch);
        mass += p;
    })?;
    // normalise by the covered mass so the tail does not bias the variance
    for m in mean.iter_mut() {
        *m /= mass;
    }
    let central = (raw_sq / mass - norm2_sq(&mean)).max(0.0);
    Ok(Moments {
        mean,
        second_central_moment: central,
    })
}

/// Exact moments of an estimator built from independent batches.
///
/// * `Vanilla`: `theta_sequence = [theta]`, `batch_sizes = [N]`.
/// * `MpoAverage`: one draw of `g(.|theta_i)` per entry, averaged.
/// * `VrmpoRecursive`: batch of `N_0` at `theta_0`, then one recursive
///   correction per later entry with batch `N_i` drawn at `theta_i`.
pub fn estimator_moments(
    kind: EstimatorKind,
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    theta_sequence: &[Vec<f64>],
    batch_sizes: &[usize],
    horizon_cap: usize,
) -> Result<Moments> {
    if theta_sequence.is_empty() {
        return Err(Error::Argument("theta_sequence must not be empty".into()));
    }
    let limits = EnumerationLimits::new(horizon_cap);
    let gamma = mdp.gamma();
    let policies = theta_sequence
        .iter()
        .map(|th| SoftmaxLinearPolicy::new(features.clone(), th.clone()))
        .collect::<Result<Vec<_>>>()?;
    match kind {
        EstimatorKind::Vanilla => {
            check_dim(1, theta_sequence.len(), "vanilla moments take one parameter vector")?;
            check_dim(1, batch_sizes.len(), "vanilla moments take one batch size")?;
            let n = positive(batch_sizes[0])?;
            let p = &policies[0];
            let m = draw_moments(mdp, p, limits, |t, out| add_vanilla_gradient(t, p, gamma, 1.0, out))?;
            Ok(Moments {
                mean: m.mean,
                second_central_moment: m.second_central_moment / n,
            })
        }
        EstimatorKind::MpoAverage => {
            let k = policies.len() as f64;
            let mut mean = vec![0.0; features.dim()];
            let mut var = 0.0;
            for p in &policies {
                let m = draw_moments(mdp, p, limits, |t, out| add_vanilla_gradient(t, p, gamma, 1.0, out))?;
                axpy(&mut mean, 1.0 / k, &m.mean);
                var += m.second_central_moment / (k * k);
            }
            Ok(Moments {
                mean,
                second_central_moment: var,
            })
        }
        EstimatorKind::VrmpoRecursive => {
            check_dim(theta_sequence.len(), batch_sizes.len(), "one batch size per parameter vector")?;
            let first = &policies[0];
            let m0 = draw_moments(mdp, first, limits, |t, out| add_vanilla_gradient(t, first, gamma, 1.0, out))?;
            let mut mean = m0.mean;
            let mut var = m0.second_central_moment / positive(batch_sizes[0])?;
            for i in 1..policies.len() {
                let (now, prev) = (&policies[i], &policies[i - 1]);
                let m = draw_moments(mdp, now, limits, |t, out| {
                    add_vanilla_gradient(t, now, gamma, 1.0, out);
                    add_vanilla_gradient(t, prev, gamma, -1.0, out);
                })?;
                axpy(&mut mean, 1.0, &m.mean);
                var += m.second_central_moment / positive(batch_sizes[i])?;
            }
            Ok(Moments {
                mean,
                second_central_moment: var,
            })
        }
        EstimatorKind::SvrpgIs => Err(Error::Argument(
            "exact moments are not available for the importance-sampling estimator".into(),
        )),
    }
}

fn positive(n: usize) -> Result<f64> {
    if n == 0 {
        Err(Error::Argument("batch sizes must be at least 1".into()))
    } else {
        Ok(n as f64)
    }
}

/// Per-draw central second moment `E||g(tau|theta) - grad J(theta)||^2`.
pub fn gradient_variance(mdp: &Mdp, policy: &SoftmaxLinearPolicy, horizon_cap: usize) -> Result<f64> {
    let gamma = mdp.gamma();
    Ok(draw_moments(mdp, policy, EnumerationLimits::new(horizon_cap), |t, out| add_vanilla_gradient(t, policy, gamma, 1.0, out))?
        .second_central_moment)
}

/// Random parameter pairs `(a, a + delta u)` with `a` uniform in
/// `[-radius, radius]^d`, `u` a random unit vector and `delta` in `(0, max_len]`.
pub fn sample_segment_pairs<R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    radius: f64,
    max_len: f64,
    rng: &mut R,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
            let mut u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm2(&u).max(1e-12);
            let len = max_len * (1.0 - rng.gen::<f64>());
            for x in u.iter_mut() {
                *x *= len / n;
            }
            let b = a.iter().zip(&u).map(|(x, d)| x + d).collect();
            (a, b)
        })
        .collect()
}

/// `max ||grad J(a) - grad J(b)|| / ||a - b||` over the given pairs.
pub fn empirical_lipschitz(mdp: &Mdp, features: &Arc<FeatureMap>, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (a, b) in pairs {
        let dist = norm2(&sub(a, b));
        if dist == 0.0 {
            continue;
        }
        let ga = analytic_gradient(mdp, &SoftmaxLinearPolicy::new(features.clone(), a.clone())?)?;
        let gb = analytic_gradient(mdp, &SoftmaxLinearPolicy::new(features.clone(), b.clone())?)?;
        best = best.max(norm2(&sub(&ga, &gb)) / dist);
    }
    Ok(best)
}

/// Lipschitz ratio of `grad J` along the segment `[a, b]`, maximised over
/// consecutive points of a uniform subdivision.
pub fn segment_lipschitz(mdp: &Mdp, features: &Arc<FeatureMap>, a: &[f64], b: &[f64], pieces: usize) -> Result<f64> {
    let pieces = pieces.max(1);
    let points: Vec<Vec<f64>> = (0..=pieces)
        .map(|i| {
            let t = i as f64 / pieces as f64;
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = points.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    let mut best = empirical_lipschitz(mdp, features, &pairs)?;
    best = best.max(empirical_lipschitz(mdp, features, &[(a.to_vec(), b.to_vec())])?);
    Ok(best)
}

/// `max_theta E||g(tau|theta) - grad J(theta)||^2` over the given parameters.
pub fn empirical_sigma_sq(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    thetas: &[Vec<f64>],
    horizon_cap: usize,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for th in thetas {
        let p = SoftmaxLinearPolicy::new(features.clone(), th.clone())?;
        best = best.max(gradient_variance(mdp, &p, horizon_cap)?);
    }
    Ok(best)
}

/// One instance of the one-step variance recursion for the recursive
/// estimator: outer batch `n1` at `prev`, correction batch `n2` at `now`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRecursion {
    /// `E||G_t - grad J(theta_t)||^2`.
    pub error_now: f64,
    /// `E||G_{t-1} - grad J(theta_{t-1})||^2`.
    pub error_prev: f64,
    pub lipschitz: f64,
    pub step_sq: f64,
    /// `(L^2 / n2) ||theta_t - theta_{t-1}||^2 + error_prev`.
    pub bound: f64,
}

impl VarianceRecursion {
    pub fn holds_with_slack(&self, slack: f64) -> bool {
        self.error_now <= slack * self.bound
    }
}

pub fn variance_recursion_check(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    prev: &[f64],
    now: &[f64],
    n1: usize,
    n2: usize,
    horizon_cap: usize,
) -> Result<VarianceRecursion> {
    let grad_prev = analytic_gradient(mdp, &SoftmaxLinearPolicy::new(features.clone(), prev.to_vec())?)?;
    let grad_now = analytic_gradient(mdp, &SoftmaxLinearPolicy::new(features.clone(), now.to_vec())?)?;
    let before = estimator_moments(EstimatorKind::Vanilla, mdp, features, &[prev.to_vec()], &[n1], horizon_cap)?;
    let after = estimator_moments(
        EstimatorKind::VrmpoRecursive,
        mdp,
        features,
        &[prev.to_vec(), now.to_vec()],
        &[n1, n2],
        horizon_cap,
    )?;
    let lipschitz = segment_lipschitz(mdp, features, prev, now, 8)?;
    let step_sq = norm2_sq(&sub(now, prev));
    let error_prev = before.mean_squared_error(&grad_prev);
    Ok(VarianceRecursion {
        error_now: after.mean_squared_error(&grad_now),
        error_prev,
        lipschitz,
        step_sq,
        bound: lipschitz * lipschitz / n2 as f64 * step_sq + error_prev,
    })
}

/// Optimal start value `sum_s rho_0(s) V*(s)` by value iteration.
pub fn optimal_value(mdp: &Mdp, tol: f64, max_iter: usize) -> Result<f64> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..max_iter {
        let mut delta: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| {
                        let row = mdp.transition_row(s, a);
                        mdp.reward(s, a) + mdp.gamma() * (0..n).map(|s2| row[s2] * v[s2]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for (a, b) in next.iter().zip(&v) {
            delta = delta.max((a - b).abs());
        }
        v = next;
        if delta <= tol {
            return Ok(mdp.initial_dist().iter().zip(&v).map(|(p, v)| p * v).sum());
        }
    }
    Err(Error::Divergence(format!("value iteration did not reach {tol:e} in {max_iter} sweeps")))
}

/// Start-state value of the corridor when `right` is taken with probability
/// `p` in every state.
pub fn corridor_value(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Divergence(format!(
            "p(right) = {p}: the corridor never terminates from some state"
        )));
    }
    let mdp = make_short_corridor();
    let mut row = vec![0.0; 2];
    row[corridor::RIGHT] = p;
    row[corridor::LEFT] = 1.0 - p;
    let v = policy_evaluation(&mdp, &vec![row; corridor::NUM_STATES])?;
    Ok(v[0])
}

pub fn corridor_value_curve(p_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    p_grid.iter().map(|&p| Ok((p, corridor_value(p)?))).collect()
}

/// Interior grid `step, 2 step, ..` strictly inside `(0, 1)`.
pub fn probability_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..n).map(|i| i as f64 * step).collect()
}

/// Probability that an episode is still running after `steps` steps, by
/// propagating the state distribution.
pub fn survival_probability(mdp: &Mdp, policy: &SoftmaxLinearPolicy, steps: usize) -> Result<f64> {
    policy.check_compatible(mdp)?;
    let n = mdp.num_states();
    let pi = policy_table(policy, n);
    let mut dist = mdp.initial_dist().to_vec();
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for (a, &pa) in pi[s].iter().enumerate() {
                for (s2, &pt) in mdp.transition_row(s, a)[..n].iter().enumerate() {
                    next[s2] += dist[s] * pa * pt;
                }
            }
        }
        dist = next;
    }
    Ok(dist.iter().sum())
}
