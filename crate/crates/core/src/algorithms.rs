//! Training loops: vanilla policy gradient, averaged-gradient mirror policy
//! optimization, its variance-reduced epoch variant, and an
//! importance-sampling baseline; plus step-size and batch-size rules.
//!
//! Estimators hand back ascent directions. The variance-reduced loop keeps
//! the descent-sign estimate `G = -value` explicitly so that its updates read
//! `theta - alpha G` and `argmin <G, w> + D(w, theta) / alpha`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{vanilla_gradient, MpoAverage, SvrpgEstimator, VrmpoRecursive};
use crate::mdp::{sample_trajectory, Mdp, Trajectory};
use crate::mirror::MirrorMap;
use crate::oracle;
use crate::policy::{FeatureMap, SoftmaxLinearPolicy};
use crate::vecops::{categorical, norm2};

/// The variance-reduced batch-size rule needs the strong-convexity constant
/// of the mirror map to exceed this.
pub const ZETA_FLOOR: f64 = 5.0 / 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vpg,
    Mpo,
    Vrmpo,
    SvrpgIs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vpg => "vpg",
            Algorithm::Mpo => "mpo",
            Algorithm::Vrmpo => "vrmpo",
            Algorithm::SvrpgIs => "svrpg_is",
        }
    }

    fn is_epoch_based(self) -> bool {
        matches!(self, Algorithm::Vrmpo | Algorithm::SvrpgIs)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `{"constant": 0.01}` or `"zeta_over_two_l"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Constant(f64),
    /// `alpha = zeta / (2 L)`; needs `lipschitz` in the config.
    ZetaOverTwoL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrmpoParams {
    /// Outer batch size.
    pub n1: usize,
    /// Inner batch size.
    pub n2: usize,
    /// Epoch length; each epoch makes `m` parameter updates.
    pub m: usize,
    /// Number of epochs `K`.
    pub epochs: usize,
}

impl VrmpoParams {
    /// `K (N1 + (m - 1) N2)`.
    pub fn trajectories(&self) -> usize {
        self.epochs * (self.n1 + (self.m - 1) * self.n2)
    }
}

fn default_mirror() -> MirrorMap {
    MirrorMap::euclidean()
}

fn default_theta0_range() -> [f64; 2] {
    [-0.5, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_mirror")]
    pub mirror: MirrorMap,
    pub step_size: StepSize,
    /// Episodes for `vpg` and `mpo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    /// Batch and epoch sizes for `vrmpo` and `svrpg_is`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vrmpo: Option<VrmpoParams>,
    #[serde(default = "default_theta0_range")]
    pub theta0_range: [f64; 2],
    /// Fixed initial parameters; overrides `theta0_range`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    /// Use a mirror step instead of a plain gradient step for the first
    /// update of each variance-reduced epoch.
    #[serde(default)]
    pub mirror_first_step: bool,
    /// Smoothness constant of `J`. When given, `mpo` picks its output with
    /// the step-size-weighted rule instead of returning the last iterate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, step_size: StepSize) -> Self {
        Self {
            algorithm,
            mirror: MirrorMap::euclidean(),
            step_size,
            episodes: None,
            vrmpo: None,
            theta0_range: default_theta0_range(),
            theta0: None,
            mirror_first_step: false,
            lipschitz: None,
        }
    }

    /// Every problem with the config; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.step_size {
            StepSize::Constant(a) if !(a.is_finite() && a > 0.0) => {
                out.push(format!("step_size must be positive and finite, got {a}"))
            }
            StepSize::ZetaOverTwoL if self.lipschitz.is_none() => {
                out.push("step_size zeta_over_two_l needs a lipschitz value".into())
            }
            _ => {}
        }
        if let Some(l) = self.lipschitz {
            if !(l.is_finite() && l > 0.0) {
                out.push(format!("lipschitz must be positive and finite, got {l}"));
            }
        }
        let [lo, hi] = self.theta0_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            out.push(format!("theta0_range must be a finite interval, got [{lo}, {hi}]"));
        }
        if let Some(th) = &self.theta0 {
            if th.iter().any(|x| !x.is_finite()) {
                out.push("theta0 has non-finite components".into());
            }
        }
        if self.algorithm.is_epoch_based() {
            match &self.vrmpo {
                None => out.push(format!("{} needs a vrmpo block (n1, n2, m, epochs)", self.algorithm)),
                Some(p) => {
                    if p.n1 == 0 || p.n2 == 0 || p.epochs == 0 {
                        out.push("vrmpo.n1, vrmpo.n2 and vrmpo.epochs must be at least 1".into());
                    }
                    if p.m < 2 {
                        out.push(format!("vrmpo.m must be at least 2, got {}", p.m));
                    }
                }
            }
            if self.episodes.is_some() {
                out.push(format!("episodes is not used by {}; set vrmpo.epochs instead", self.algorithm));
            }
        } else {
            match self.episodes {
                None => out.push(format!("{} needs episodes", self.algorithm)),
                Some(0) => out.push("episodes must be at least 1".into()),
                Some(_) => {}
            }
            if self.vrmpo.is_some() {
                out.push(format!("the vrmpo block is not used by {}", self.algorithm));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Resolved constant step size.
    pub fn alpha(&self) -> Result<f64> {
        match self.step_size {
            StepSize::Constant(a) => Ok(a),
            StepSize::ZetaOverTwoL => {
                let l = self
                    .lipschitz
                    .ok_or_else(|| Error::Argument("zeta_over_two_l needs a lipschitz value".into()))?;
                Ok(self.mirror.zeta() / (2.0 * l))
            }
        }
    }

    /// Trajectories a full run consumes.
    pub fn budget(&self) -> usize {
        match (self.algorithm.is_epoch_based(), &self.vrmpo) {
            (true, Some(p)) => p.trajectories(),
            _ => self.episodes.unwrap_or(0),
        }
    }

    fn expect(&self, algorithm: Algorithm) -> Result<()> {
        if self.algorithm != algorithm {
            return Err(Error::Argument(format!(
                "config is for {}, not {}",
                self.algorithm, algorithm
            )));
        }
        self.validate()
    }

    fn initial_policy(&self, features: &Arc<FeatureMap>, rng: &mut ChaCha8Rng) -> Result<SoftmaxLinearPolicy> {
        match &self.theta0 {
            Some(th) => SoftmaxLinearPolicy::new(features.clone(), th.clone()),
            None => {
                let [lo, hi] = self.theta0_range;
                SoftmaxLinearPolicy::uniform_init(features.clone(), (lo, hi), rng)
            }
        }
    }
}

/// Initial parameters a run with this seed starts from.
pub fn initial_theta(config: &AlgoConfig, features: &Arc<FeatureMap>, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(config.initial_policy(features, &mut rng)?.theta().to_vec())
}

/// How often to log and whether to attach exact values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogOptions {
    pub every: usize,
    pub oracle: bool,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self { every: 1, oracle: false }
    }
}

/// One logged update. Parameter-dependent columns describe the parameters
/// after the update.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub iteration: usize,
    /// Cumulative trajectories sampled.
    pub trajectories: usize,
    /// Mean return of the trajectories sampled in this iteration.
    pub est_return: f64,
    pub exact_j: Option<f64>,
    pub bregman_grad_norm: Option<f64>,
    pub theta_norm: f64,
    /// Cumulative episodes cut off by the horizon cap.
    pub truncated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    /// Final iterate.
    Last,
    /// Drawn with probability proportional to `zeta alpha_k - L alpha_k^2`.
    Weighted,
    /// Uniform over the iterates of the last epoch.
    UniformInner,
}

impl fmt::Display for OutputRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputRule::Last => "last",
            OutputRule::Weighted => "weighted",
            OutputRule::UniformInner => "uniform_inner",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub zeta: f64,
    pub alpha: f64,
    pub rows: Vec<RunRow>,
    pub final_theta: Vec<f64>,
    /// Index of the selected iterate (0-based), when the rule selects one.
    pub output_index: Option<usize>,
    pub output_rule: OutputRule,
    pub trajectories_consumed: usize,
    pub truncated_total: usize,
    pub notes: Vec<String>,
}

struct Logger<'a> {
    mdp: &'a Mdp,
    mirror: MirrorMap,
    alpha: f64,
    opts: LogOptions,
    rows: Vec<RunRow>,
    trajectories: usize,
    truncated: usize,
    last_iteration: usize,
}

impl<'a> Logger<'a> {
    fn new(mdp: &'a Mdp, mirror: MirrorMap, alpha: f64, opts: LogOptions, last_iteration: usize) -> Result<Self> {
        if opts.every == 0 {
            return Err(Error::Argument("log interval must be at least 1".into()));
        }
        Ok(Self {
            mdp,
            mirror,
            alpha,
            opts,
            rows: Vec::new(),
            trajectories: 0,
            truncated: 0,
            last_iteration,
        })
    }

    fn consume(&mut self, batch: &[Trajectory]) -> f64 {
        self.trajectories += batch.len();
        self.truncated += batch.iter().filter(|t| t.truncated).count();
        let gamma = self.mdp.gamma();
        batch.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / batch.len() as f64
    }

    fn row(&mut self, iteration: usize, est_return: f64, policy: &SoftmaxLinearPolicy) -> Result<()> {
        if !iteration.is_multiple_of(self.opts.every) && iteration != self.last_iteration {
            return Ok(());
        }
        let (exact_j, bregman_grad_norm) = if self.opts.oracle {
            let (j, n) = exact_diagnostics(self.mdp, policy, &self.mirror, self.alpha)?;
            (Some(j), Some(n))
        } else {
            (None, None)
        };
        self.rows.push(RunRow {
            iteration,
            trajectories: self.trajectories,
            est_return,
            exact_j,
            bregman_grad_norm,
            theta_norm: norm2(policy.theta()),
            truncated: self.truncated,
        });
        Ok(())
    }
}

/// Exact `J(theta)` and `||G(theta, grad J, alpha)||`; a policy whose value
/// diverges reports `(-inf, NaN)` instead of failing the run.
pub fn exact_diagnostics(
    mdp: &Mdp,
    policy: &SoftmaxLinearPolicy,
    mirror: &MirrorMap,
    alpha: f64,
) -> Result<(f64, f64)> {
    match oracle::exact_return(mdp, policy) {
        Ok(j) => {
            let g = oracle::analytic_gradient(mdp, policy)?;
            Ok((j, mirror.bregman_gradient_norm(alpha, &g, policy.theta())?))
        }
        Err(Error::Divergence(msg)) => {
            log::debug!("exact value diverges: {msg}");
            Ok((f64::NEG_INFINITY, f64::NAN))
        }
        Err(e) => Err(e),
    }
}

fn sample_batch(mdp: &Mdp, policy: &SoftmaxLinearPolicy, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Trajectory>> {
    (0..n).map(|_| sample_trajectory(mdp, policy, rng)).collect()
}

/// Single-trajectory ascent: `theta <- prox(alpha, g(tau|theta), theta)`,
/// i.e. `theta + alpha g` for the Euclidean map.
pub fn run_vpg(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    config: &AlgoConfig,
    seed: u64,
    log: LogOptions,
) -> Result<RunRecord> {
    config.expect(Algorithm::Vpg)?;
    single_trajectory_loop(mdp, features, config, seed, log, false)
}

/// Averaged-gradient mirror ascent: `theta_{k+1} = prox(alpha, g_hat_k, theta_k)`
/// with `g_hat_k` the mean of every gradient seen so far.
pub fn run_mpo(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    config: &AlgoConfig,
    seed: u64,
    log: LogOptions,
) -> Result<RunRecord> {
    config.expect(Algorithm::Mpo)?;
    single_trajectory_loop(mdp, features, config, seed, log, true)
}

fn single_trajectory_loop(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    config: &AlgoConfig,
    seed: u64,
    log: LogOptions,
    average: bool,
) -> Result<RunRecord> {
    let episodes = config.episodes.unwrap_or(0);
    let alpha = config.alpha()?;
    let mirror = config.mirror;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = config.initial_policy(features, &mut rng)?;
    let mut logger = Logger::new(mdp, mirror, alpha, log, episodes)?;
    let mut avg = MpoAverage::new(policy.dim());
    let weighted = average && config.lipschitz.is_some();
    let mut history = Vec::new();
    let mut notes = Vec::new();

    for k in 1..=episodes {
        let traj = sample_trajectory(mdp, &policy, &mut rng)?;
        let est = logger.consume(std::slice::from_ref(&traj));
        let g = vanilla_gradient(&traj, &policy, mdp.gamma());
        let direction = if average {
            avg.absorb(&g)?;
            avg.value()
        } else {
            &g
        };
        if weighted {
            history.push(policy.theta().to_vec());
        }
        let next = mirror.prox_step(alpha, direction, policy.theta())?;
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric(format!("parameters became non-finite at episode {k}")));
        }
        policy = policy.with_theta(next)?;
        logger.row(k, est, &policy)?;
    }

    let (final_theta, output_index, output_rule) = if weighted {
        let l = config.lipschitz.unwrap_or(f64::NAN);
        let n = sample_output_index(&vec![alpha; episodes], mirror.zeta(), l, &mut rng)?;
        (history.swap_remove(n), Some(n), OutputRule::Weighted)
    } else {
        if average {
            notes.push("output is the last iterate (no smoothness constant configured)".into());
        }
        (policy.theta().to_vec(), None, OutputRule::Last)
    };
    Ok(RunRecord {
        algorithm: config.algorithm,
        seed,
        zeta: mirror.zeta(),
        alpha,
        rows: logger.rows,
        final_theta,
        output_index,
        output_rule,
        trajectories_consumed: logger.trajectories,
        truncated_total: logger.truncated,
        notes,
    })
}

/// Variance-reduced epochs. Per epoch `k`:
///
/// ```text
/// theta_{k,0} = theta~_{k-1};  G_{k,0} = -mean_i g(tau_i|theta_{k,0})   (N1 draws)
/// theta_{k,1} = theta_{k,0} - alpha G_{k,0}
/// for t = 1..m-1:
///     G_{k,t} = G_{k,t-1} + mean_j [-g(tau_j|theta_{k,t}) + g(tau_j|theta_{k,t-1})]   (N2 draws at theta_{k,t})
///     theta_{k,t+1} = argmin_w <G_{k,t}, w> + D(w, theta_{k,t}) / alpha
/// theta~_k = theta_{k,t},  t ~ U{0, .., m}
/// ```
pub fn run_vrmpo(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    config: &AlgoConfig,
    seed: u64,
    log: LogOptions,
) -> Result<RunRecord> {
    config.expect(Algorithm::Vrmpo)?;
    let params = config.vrmpo.expect("validated");
    let alpha = config.alpha()?;
    let mirror = config.mirror;
    let gamma = mdp.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchor = config.initial_policy(features, &mut rng)?;
    let mut logger = Logger::new(mdp, mirror, alpha, log, params.epochs * params.m)?;
    let mut notes = Vec::new();
    if !config.mirror_first_step {
        notes.push("first update of each epoch is a plain gradient step".into());
    }
    let mut iteration = 0;
    let mut output_index = None;

    for _ in 0..params.epochs {
        // iterates theta_{k,0..=m}
        let mut iterates = Vec::with_capacity(params.m + 1);
        iterates.push(anchor.clone());

        let batch = sample_batch(mdp, &anchor, params.n1, &mut rng)?;
        let est = logger.consume(&batch);
        let mut estimator = VrmpoRecursive::init(&batch, &anchor, gamma)?;
        let descent: Vec<f64> = estimator.value().iter().map(|v| -v).collect();
        let first = if config.mirror_first_step {
            mirror.prox_step(alpha, estimator.value(), anchor.theta())?
        } else {
            anchor.theta().iter().zip(&descent).map(|(t, g)| t - alpha * g).collect()
        };
        let mut current = anchor.with_theta(first)?;
        iteration += 1;
        logger.row(iteration, est, &current)?;
        iterates.push(current.clone());

        for t in 1..params.m {
            if estimator.prev_theta() != iterates[t - 1].theta() {
                return Err(Error::Invariant(format!(
                    "recursive estimator holds parameters other than theta_(k,{})",
                    t - 1
                )));
            }
            let batch = sample_batch(mdp, &current, params.n2, &mut rng)?;
            let est = logger.consume(&batch);
            estimator.update(&batch, &current, gamma)?;
            // argmin <G, w> + D/alpha with G = -value is the ascent prox on value
            let next = mirror.prox_step(alpha, estimator.value(), current.theta())?;
            if !next.iter().all(|x| x.is_finite()) {
                return Err(Error::Numeric(format!("parameters became non-finite at update {iteration}")));
            }
            current = current.with_theta(next)?;
            iteration += 1;
            logger.row(iteration, est, &current)?;
            iterates.push(current.clone());
        }

        let pick = rng.gen_range(0..=params.m);
        output_index = Some(pick);
        anchor = iterates.swap_remove(pick);
    }

    Ok(RunRecord {
        algorithm: Algorithm::Vrmpo,
        seed,
        zeta: mirror.zeta(),
        alpha,
        rows: logger.rows,
        final_theta: anchor.theta().to_vec(),
        output_index,
        output_rule: OutputRule::UniformInner,
        trajectories_consumed: logger.trajectories,
        truncated_total: logger.truncated,
        notes,
    })
}

/// Importance-sampling baseline with the same epoch structure: snapshot
/// gradient at the epoch start, weighted corrections afterwards, mirror
/// steps throughout, next snapshot at the last iterate.
pub fn run_svrpg(
    mdp: &Mdp,
    features: &Arc<FeatureMap>,
    config: &AlgoConfig,
    seed: u64,
    log: LogOptions,
) -> Result<RunRecord> {
    config.expect(Algorithm::SvrpgIs)?;
    let params = config.vrmpo.expect("validated");
    let alpha = config.alpha()?;
    let mirror = config.mirror;
    let gamma = mdp.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = config.initial_policy(features, &mut rng)?;
    let mut logger = Logger::new(mdp, mirror, alpha, log, params.epochs * params.m)?;
    let mut iteration = 0;
    let mut clamps = 0;

    for _ in 0..params.epochs {
        let batch = sample_batch(mdp, &current, params.n1, &mut rng)?;
        let est = logger.consume(&batch);
        let mut estimator = SvrpgEstimator::init(&batch, &current, gamma)?;
        current = current.with_theta(mirror.prox_step(alpha, estimator.value(), current.theta())?)?;
        iteration += 1;
        logger.row(iteration, est, &current)?;
        for _ in 1..params.m {
            let batch = sample_batch(mdp, &current, params.n2, &mut rng)?;
            let est = logger.consume(&batch);
            estimator.update(&batch, &current, gamma)?;
            let next = mirror.prox_step(alpha, estimator.value(), current.theta())?;
            if !next.iter().all(|x| x.is_finite()) {
                return Err(Error::Numeric(format!("parameters became non-finite at update {iteration}")));
            }
            current = current.with_theta(next)?;
            iteration += 1;
            logger.row(iteration, est, &current)?;
        }
        clamps += estimator.clamp_events();
    }

    let mut notes = Vec::new();
    if clamps > 0 {
        notes.push(format!("{clamps} importance weights clamped"));
    }
    Ok(RunRecord {
        algorithm: Algorithm::SvrpgIs,
        seed,
        zeta: mirror.zeta(),
        alpha,
        rows: logger.rows,
        final_theta: current.theta().to_vec(),
        output_index: None,
        output_rule: OutputRule::Last,
        trajectories_consumed: logger.trajectories,
        truncated_total: logger.truncated,
        notes,
    })
}

/// Runs whichever algorithm the config names.
pub fn run(mdp: &Mdp, features: &Arc<FeatureMap>, config: &AlgoConfig, seed: u64, log: LogOptions) -> Result<RunRecord> {
    match config.algorithm {
        Algorithm::Vpg => run_vpg(mdp, features, config, seed, log),
        Algorithm::Mpo => run_mpo(mdp, features, config, seed, log),
        Algorithm::Vrmpo => run_vrmpo(mdp, features, config, seed, log),
        Algorithm::SvrpgIs => run_svrpg(mdp, features, config, seed, log),
    }
}

/// Draws `n` with probability `(zeta a_n - L a_n^2) / sum_k (zeta a_k - L a_k^2)`.
pub fn sample_output_index<R: Rng + ?Sized>(step_sizes: &[f64], zeta: f64, l: f64, rng: &mut R) -> Result<usize> {
    Ok(categorical(&output_weights(step_sizes, zeta, l)?, rng.gen::<f64>()))
}

/// Normalised output probabilities; every step size must satisfy
/// `0 < alpha_k < zeta / L`.
pub fn output_weights(step_sizes: &[f64], zeta: f64, l: f64) -> Result<Vec<f64>> {
    if step_sizes.is_empty() {
        return Err(Error::Argument("no step sizes to choose from".into()));
    }
    if !(zeta.is_finite() && zeta > 0.0 && l.is_finite() && l > 0.0) {
        return Err(Error::Argument(format!("zeta and L must be positive and finite, got {zeta} and {l}")));
    }
    let limit = zeta / l;
    let mut w = Vec::with_capacity(step_sizes.len());
    for (k, &a) in step_sizes.iter().enumerate() {
        if !(a > 0.0 && a < limit) {
            return Err(Error::Argument(format!(
                "step size alpha_{k} = {a} must lie in (0, zeta / L) = (0, {limit})"
            )));
        }
        w.push(zeta * a - l * a * a);
    }
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Batch sizes, epoch count and step size for the variance-reduced loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VrmpoHyperparams {
    pub c: f64,
    /// `C sigma^2 / eps^2` before rounding up.
    pub n1_raw: f64,
    /// `sqrt(C) sigma / eps` before rounding up.
    pub n2_raw: f64,
    pub k_raw: f64,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub epochs: usize,
    pub alpha: f64,
}

impl VrmpoHyperparams {
    pub fn params(&self) -> VrmpoParams {
        VrmpoParams {
            n1: self.n1,
            n2: self.n2,
            m: self.m,
            epochs: self.epochs,
        }
    }
}

/// ```text
/// C   = 1/(8 L zeta^2) + (1 + 1/(32 zeta^2)) / (2 (zeta - 5/32))
/// N1  = ceil(C sigma^2 / eps^2)
/// N2  = m - 1 = ceil(sqrt(C) sigma / eps)
/// K   = ceil(8 L delta (1 + 1/(16 zeta^2)) / ((m - 1)(zeta - 5/32) eps^2))
/// alpha = 1 / (4 L)
/// ```
/// `delta` is the initial objective gap `J(theta*) - J(theta~_0)`.
pub fn vrmpo_hyperparams(epsilon: f64, sigma: f64, l: f64, zeta: f64, delta: f64) -> Result<VrmpoHyperparams> {
    if !(zeta > ZETA_FLOOR) {
        return Err(Error::Argument(format!(
            "the batch-size rule requires zeta > 5/32, got {zeta}"
        )));
    }
    for (name, v) in [("epsilon", epsilon), ("sigma", sigma), ("L", l), ("delta", delta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Argument(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let gap = zeta - ZETA_FLOOR;
    let c = 1.0 / (8.0 * l * zeta * zeta) + (1.0 + 1.0 / (32.0 * zeta * zeta)) / (2.0 * gap);
    let n1_raw = c * sigma * sigma / (epsilon * epsilon);
    let n2_raw = c.sqrt() * sigma / epsilon;
    let n1 = n1_raw.ceil() as usize;
    let n2 = n2_raw.ceil() as usize;
    let k_raw = 8.0 * l * delta / (n2 as f64 * gap) * (1.0 + 1.0 / (16.0 * zeta * zeta)) / (epsilon * epsilon);
    Ok(VrmpoHyperparams {
        c,
        n1_raw,
        n2_raw,
        k_raw,
        n1: n1.max(1),
        n2: n2.max(1),
        m: n2.max(1) + 1,
        epochs: (k_raw.ceil() as usize).max(1),
        alpha: 1.0 / (4.0 * l),
    })
}
