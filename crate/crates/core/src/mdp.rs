//! Finite tabular MDPs, episode sampling and returns.
//!
//! States are indexed `0..num_states`; the index `num_states` is a single
//! absorbing terminal state. Transition rows therefore have `num_states + 1`
//! entries and are stochastic, while rewards, policies and feature maps only
//! ever see the nonterminal states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::policy::SoftmaxLinearPolicy;
use crate::vecops::categorical;

const ROW_TOLERANCE: f64 = 1e-12;

/// A finite MDP with an explicit terminal index and hard episode cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `[s][a][s']` flattened, with `s'` ranging over `0..=num_states`.
    transition: Vec<f64>,
    /// `[s][a]` flattened.
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    gamma: f64,
    h_max: usize,
    r_max: f64,
}

impl Mdp {
    /// Builds an MDP, checking every structural invariant.
    ///
    /// `transition[s][a]` must have `num_states + 1` entries (the last one is
    /// the terminal state) and sum to one.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        gamma: f64,
        h_max: usize,
        r_max: f64,
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(Error::InvalidMdp("at least one nonterminal state is required".into()));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::InvalidMdp("at least one action is required".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidMdp(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if h_max == 0 {
            return Err(Error::InvalidMdp("h_max must be at least 1".into()));
        }
        if !(r_max.is_finite() && r_max >= 0.0) {
            return Err(Error::InvalidMdp(format!("r_max must be finite and nonnegative, got {r_max}")));
        }
        check_dim(num_states, reward.len(), "reward rows")?;
        check_dim(num_states, initial_dist.len(), "initial distribution")?;

        let mut flat_t = Vec::with_capacity(num_states * num_actions * (num_states + 1));
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, (rows, rewards)) in transition.iter().zip(&reward).enumerate() {
            check_dim(num_actions, rows.len(), "actions per state")?;
            check_dim(num_actions, rewards.len(), "reward entries per state")?;
            for (a, row) in rows.iter().enumerate() {
                check_dim(num_states + 1, row.len(), "transition row (states + terminal)")?;
                if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                    return Err(Error::InvalidMdp(format!("negative or non-finite probability in row ({s}, {a})")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::InvalidMdp(format!("row ({s}, {a}) sums to {total}")));
                }
                flat_t.extend_from_slice(row);
                let r = rewards[a];
                if !(r.is_finite() && r.abs() <= r_max) {
                    return Err(Error::InvalidMdp(format!("reward[{s}][{a}] = {r} exceeds r_max = {r_max}")));
                }
                flat_r.push(r);
            }
        }
        if initial_dist.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidMdp("initial distribution has a negative entry".into()));
        }
        let total: f64 = initial_dist.iter().sum();
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidMdp(format!("initial distribution sums to {total}")));
        }

        Ok(Self {
            num_states,
            num_actions,
            transition: flat_t,
            reward: flat_r,
            initial_dist,
            gamma,
            h_max,
            r_max,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Index of the absorbing terminal state.
    pub fn terminal(&self) -> usize {
        self.num_states
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        state == self.num_states
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    /// Declared reward bound: every `|reward[s][a]| <= r_max`.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Distribution over next states (terminal last) for a nonterminal state.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let width = self.num_states + 1;
        let start = (state * self.num_actions + action) * width;
        &self.transition[start..start + width]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    /// Copy with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidMdp(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { gamma, ..self.clone() })
    }

    /// Copy with a different episode cap.
    pub fn with_h_max(&self, h_max: usize) -> Result<Self> {
        if h_max == 0 {
            return Err(Error::InvalidMdp("h_max must be at least 1".into()));
        }
        Ok(Self { h_max, ..self.clone() })
    }

    fn check_indices(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::Index(format!(
                "state {state} is terminal or out of range (num_states = {})",
                self.num_states
            )));
        }
        if action >= self.num_actions {
            return Err(Error::Index(format!(
                "action {action} out of range (num_actions = {})",
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Outcome of a single environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
}

/// Advances the environment by one step from a nonterminal state.
pub fn step<R: Rng + ?Sized>(mdp: &Mdp, state: usize, action: usize, rng: &mut R) -> Result<Transition> {
    mdp.check_indices(state, action)?;
    let next_state = categorical(mdp.transition_row(state, action), rng.gen::<f64>());
    Ok(Transition {
        next_state,
        reward: mdp.reward(state, action),
        done: mdp.is_terminal(next_state),
    })
}

/// One `(s_t, a_t, r_{t+1})` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// An episode. `truncated` is set when the episode hit `h_max` without
/// reaching the terminal state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub truncated: bool,
}

impl Trajectory {
    pub fn from_steps(steps: Vec<Step>) -> Self {
        Self { steps, truncated: false }
    }

    /// Number of steps taken.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    /// Discounted return of this episode.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_return(self, gamma)
    }
}

/// `sum_t gamma^t r_{t+1}`.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in traj.rewards() {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Samples one episode from `rho_0` under the policy, stopping at the terminal
/// state or after `h_max` steps.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &SoftmaxLinearPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    policy.check_compatible(mdp)?;
    let mut state = categorical(mdp.initial_dist(), rng.gen::<f64>());
    let mut steps = Vec::new();
    let mut probs = vec![0.0; mdp.num_actions()];
    while steps.len() < mdp.h_max() {
        policy.action_probabilities_into(state, &mut probs);
        let action = categorical(&probs, rng.gen::<f64>());
        let t = step(mdp, state, action, rng)?;
        steps.push(Step {
            state,
            action,
            reward: t.reward,
        });
        if t.done {
            return Ok(Trajectory { steps, truncated: false });
        }
        state = t.next_state;
    }
    Ok(Trajectory { steps, truncated: true })
}

/// Action indices of the short corridor.
pub mod corridor {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    /// Nonterminal states `s1, s2, s3`.
    pub const NUM_STATES: usize = 3;
    pub const DEFAULT_H_MAX: usize = 1000;
}

/// Three-state corridor where the middle state swaps the effect of the two
/// actions. Reward is -1 per step; the episode starts in `s1` and ends when
/// `right` is taken in `s3`.
pub fn make_short_corridor() -> Mdp {
    make_short_corridor_with(1.0, corridor::DEFAULT_H_MAX).expect("corridor construction is valid")
}

/// Short corridor with a custom discount and cap.
pub fn make_short_corridor_with(gamma: f64, h_max: usize) -> Result<Mdp> {
    use corridor::{LEFT, RIGHT};
    let terminal = 3;
    let mut transition = vec![vec![vec![0.0; 4]; 2]; 3];
    // s1: left bumps into the wall, right moves on
    transition[0][LEFT][0] = 1.0;
    transition[0][RIGHT][1] = 1.0;
    // s2: reversed
    transition[1][LEFT][2] = 1.0;
    transition[1][RIGHT][0] = 1.0;
    // s3
    transition[2][LEFT][1] = 1.0;
    transition[2][RIGHT][terminal] = 1.0;
    let reward = vec![vec![-1.0; 2]; 3];
    Mdp::new(transition, reward, vec![1.0, 0.0, 0.0], gamma, h_max, 1.0)
}

/// Lower and upper bound of the per-(s, a) termination probability used by
/// [`make_random_mdp`].
pub const RANDOM_MDP_TERMINATION: (f64, f64) = (0.6, 0.9);

/// Seeded random MDP for oracle fixtures.
///
/// Each `(s, a)` row sends mass `U[0.6, 0.9]` to the terminal state and spreads
/// the rest over the nonterminal states with flat Dirichlet weights. Rewards are
/// `U[-1, 1]` and the start distribution is a flat Dirichlet draw.
pub fn make_random_mdp(num_states: usize, num_actions: usize, seed: u64, gamma: f64, h_max: usize) -> Result<Mdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Argument("num_states and num_actions must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_lo, t_hi) = RANDOM_MDP_TERMINATION;
    let mut transition = Vec::with_capacity(num_states);
    let mut reward = Vec::with_capacity(num_states);
    for _ in 0..num_states {
        let mut rows = Vec::with_capacity(num_actions);
        let mut rs = Vec::with_capacity(num_actions);
        for _ in 0..num_actions {
            let stop = rng.gen_range(t_lo..t_hi);
            let weights = dirichlet_flat(&mut rng, num_states);
            let mut row: Vec<f64> = weights.iter().map(|w| (1.0 - stop) * w).collect();
            row.push(stop);
            renormalize(&mut row);
            rows.push(row);
            rs.push(rng.gen_range(-1.0..=1.0));
        }
        transition.push(rows);
        reward.push(rs);
    }
    let mut initial = dirichlet_flat(&mut rng, num_states);
    renormalize(&mut initial);
    Mdp::new(transition, reward, initial, gamma, h_max, 1.0)
}

fn dirichlet_flat<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // Gamma(1) draws are exponential.
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

// Pushes the rounding residue into the largest entry so rows sum to 1 to
// within an ulp or two.
fn renormalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= total;
    }
    let residue = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
}
