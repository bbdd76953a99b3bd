//! Experiment configuration, seeded runs, sweeps and CSV output.
//!
//! A config file is JSON with the top-level keys `env`, `algo`, `seeds`,
//! `output` and `oracle_logging`; unknown keys are rejected.
//!
//! ```json
//! {
//!   "env": {"kind": "short_corridor", "gamma": 1.0, "h_max": 1000},
//!   "algo": {"algorithm": "mpo", "step_size": {"constant": 0.0001}, "episodes": 10000},
//!   "seeds": [0, 1, 2],
//!   "output": {"dir": "out/mpo", "log_every": 100},
//!   "oracle_logging": true
//! }
//! ```
//!
//! `algo` may also be a list of algorithm configs, which only `compare`
//! accepts.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::json;

use crate::algorithms::{self, AlgoConfig, Algorithm, LogOptions, RunRecord, RunRow};
use crate::error::{Error, Result};
use crate::mdp::{corridor, make_random_mdp, make_short_corridor_with, Mdp};
use crate::mirror::MirrorMap;
use crate::oracle;
use crate::policy::{assumption_constants, FeatureMap, SoftmaxLinearPolicy};

/// Step sizes tried by the learning-rate grid.
pub const LEARNING_RATE_GRID: [f64; 5] = [0.01, 0.02, 0.04, 0.08, 0.1];

/// Mirror exponents tried by the p-sweep.
pub const DEFAULT_P_GRID: [f64; 13] = [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 3.0, 4.0, 5.0];

pub const CSV_HEADER: &str = "iteration,trajectories,est_return,exact_J,bregman_grad_norm,theta_norm,truncated";

fn one() -> f64 {
    1.0
}

fn default_h_max() -> usize {
    corridor::DEFAULT_H_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    ShortCorridor {
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "default_h_max")]
        h_max: usize,
    },
    RandomMdp {
        num_states: usize,
        num_actions: usize,
        seed: u64,
        gamma: f64,
        h_max: usize,
    },
}

impl EnvConfig {
    /// The MDP and the feature map its policies use: the two-feature
    /// left/right map on the corridor, one-hot features elsewhere.
    pub fn build(&self) -> Result<(Mdp, Arc<FeatureMap>)> {
        match *self {
            EnvConfig::ShortCorridor { gamma, h_max } => Ok((
                make_short_corridor_with(gamma, h_max)?,
                Arc::new(FeatureMap::short_corridor()),
            )),
            EnvConfig::RandomMdp {
                num_states,
                num_actions,
                seed,
                gamma,
                h_max,
            } => Ok((
                make_random_mdp(num_states, num_actions, seed, gamma, h_max)?,
                Arc::new(FeatureMap::tabular(num_states, num_actions)),
            )),
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (gamma, h_max) = match *self {
            EnvConfig::ShortCorridor { gamma, h_max } => (gamma, h_max),
            EnvConfig::RandomMdp {
                num_states,
                num_actions,
                gamma,
                h_max,
                ..
            } => {
                if num_states == 0 || num_actions == 0 {
                    out.push("env.num_states and env.num_actions must be at least 1".into());
                }
                (gamma, h_max)
            }
        };
        if !(gamma > 0.0 && gamma <= 1.0) {
            out.push(format!("env.gamma must lie in (0, 1], got {gamma}"));
        }
        if h_max == 0 {
            out.push("env.h_max must be at least 1".into());
        }
        out
    }
}

/// One algorithm or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AlgoSpec {
    One(AlgoConfig),
    Many(Vec<AlgoConfig>),
}

impl<'de> Deserialize<'de> for AlgoSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        if v.is_array() {
            serde_json::from_value(v).map(AlgoSpec::Many).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(AlgoSpec::One).map_err(D::Error::custom)
        }
    }
}

impl AlgoSpec {
    pub fn as_slice(&self) -> &[AlgoConfig] {
        match self {
            AlgoSpec::One(a) => std::slice::from_ref(a),
            AlgoSpec::Many(v) => v,
        }
    }
}

fn default_log_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algo: AlgoSpec,
    pub seeds: Vec<u64>,
    pub output: OutputConfig,
    #[serde(default)]
    pub oracle_logging: bool,
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.env.violations();
        if self.seeds.is_empty() {
            out.push("seeds must not be empty".into());
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                out.push(format!("seed {s} appears more than once"));
            }
        }
        if self.output.log_every == 0 {
            out.push("output.log_every must be at least 1".into());
        }
        let dim = match self.env.build() {
            Ok((_, f)) => Some(f.dim()),
            Err(_) => None,
        };
        let algos = self.algo.as_slice();
        if algos.is_empty() {
            out.push("algo list must not be empty".into());
        }
        for (i, a) in algos.iter().enumerate() {
            let prefix = match self.algo {
                AlgoSpec::One(_) => "algo".to_string(),
                AlgoSpec::Many(_) => format!("algo[{i}]"),
            };
            for v in a.violations() {
                out.push(format!("{prefix}: {v}"));
            }
            if let (Some(th), Some(d)) = (&a.theta0, dim) {
                if th.len() != d {
                    out.push(format!("{prefix}: theta0 has {} components, the features have {d}", th.len()));
                }
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

    /// Shifts every seed by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Result<Self> {
        self.seeds = self
            .seeds
            .iter()
            .map(|s| {
                s.checked_add(offset)
                    .ok_or_else(|| Error::Validation(vec![format!("seed {s} + offset {offset} overflows")]))
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output.dir = dir.into();
        self
    }

    fn single_algo(&self) -> Result<&AlgoConfig> {
        match &self.algo {
            AlgoSpec::One(a) => Ok(a),
            AlgoSpec::Many(v) if v.len() == 1 => Ok(&v[0]),
            AlgoSpec::Many(_) => Err(Error::Validation(vec![
                "algo lists more than one algorithm; use compare".into(),
            ])),
        }
    }

    fn with_algo(&self, algo: AlgoConfig, dir: PathBuf) -> Self {
        Self {
            algo: AlgoSpec::One(algo),
            output: OutputConfig {
                dir,
                log_every: self.output.log_every,
            },
            ..self.clone()
        }
    }

    fn log_options(&self) -> LogOptions {
        LogOptions {
            every: self.output.log_every,
            oracle: self.oracle_logging,
        }
    }
}

/// Records of one experiment plus the exact value of each output parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    /// Exact `J` at each record's output parameters, in seed order.
    pub final_exact_j: Vec<f64>,
    pub files: Vec<PathBuf>,
}

impl ExperimentResult {
    pub fn final_mean(&self) -> f64 {
        mean_std(&self.final_exact_j).0
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Per-run CSV text.
pub fn run_csv(rows: &[RunRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.trajectories,
            fmt_f64(r.est_return),
            fmt_opt(r.exact_j),
            fmt_opt(r.bregman_grad_norm),
            fmt_f64(r.theta_norm),
            r.truncated
        );
    }
    s
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn opt_column(records: &[RunRecord], i: usize, f: impl Fn(&RunRow) -> Option<f64>) -> Option<Vec<f64>> {
    records.iter().map(|r| f(&r.rows[i])).collect()
}

/// Mean and standard deviation across seeds for each logged iteration.
pub fn aggregate_csv(records: &[RunRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(Error::Argument("nothing to aggregate".into()));
    };
    for r in records {
        if r.rows.len() != first.rows.len()
            || r.rows.iter().zip(&first.rows).any(|(a, b)| a.iteration != b.iteration)
        {
            return Err(Error::Invariant("seeds logged different iterations".into()));
        }
    }
    let mut s = String::from(
        "iteration,trajectories,seeds,est_return_mean,est_return_std,exact_J_mean,exact_J_std,\
         bregman_grad_norm_mean,bregman_grad_norm_std,theta_norm_mean,theta_norm_std,truncated_mean\n",
    );
    for (i, row) in first.rows.iter().enumerate() {
        let pair = |v: Option<Vec<f64>>| match v {
            Some(v) => {
                let (m, sd) = mean_std(&v);
                (fmt_f64(m), fmt_f64(sd))
            }
            None => (String::new(), String::new()),
        };
        let est = pair(opt_column(records, i, |r| Some(r.est_return)));
        let j = pair(opt_column(records, i, |r| r.exact_j));
        let g = pair(opt_column(records, i, |r| r.bregman_grad_norm));
        let th = pair(opt_column(records, i, |r| Some(r.theta_norm)));
        let trunc = mean_std(&records.iter().map(|r| r.rows[i].truncated as f64).collect::<Vec<_>>()).0;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.iteration,
            row.trajectories,
            records.len(),
            est.0,
            est.1,
            j.0,
            j.1,
            g.0,
            g.1,
            th.0,
            th.1,
            fmt_f64(trunc)
        );
    }
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Exact `J` at a record's output parameters (`-inf` when it diverges).
pub fn final_exact_return(mdp: &Mdp, features: &Arc<FeatureMap>, record: &RunRecord) -> Result<f64> {
    let policy = SoftmaxLinearPolicy::new(features.clone(), record.final_theta.clone())?;
    match oracle::exact_return(mdp, &policy) {
        Ok(j) => Ok(j),
        Err(Error::Divergence(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Runs every seed without touching the file system.
pub fn run_seeds(config: &ExperimentConfig) -> Result<(Vec<RunRecord>, Vec<f64>)> {
    config.validate()?;
    let algo = config.single_algo()?;
    let (mdp, features) = config.env.build()?;
    let log = config.log_options();
    let out: Vec<(RunRecord, f64)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let rec = algorithms::run(&mdp, &features, algo, seed, log)?;
            let j = final_exact_return(&mdp, &features, &rec)?;
            Ok((rec, j))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

/// Runs every seed and writes `seed_<s>.csv`, `aggregate.csv` and
/// `summary.csv` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let dir = &config.output.dir;
    create_dir(dir)?;
    let (records, finals) = run_seeds(config)?;
    let mut files = Vec::new();
    for rec in &records {
        let path = dir.join(format!("seed_{}.csv", rec.seed));
        write_file(&path, &run_csv(&rec.rows))?;
        files.push(path);
    }
    let agg = dir.join("aggregate.csv");
    write_file(&agg, &aggregate_csv(&records)?)?;
    files.push(agg);

    let mut summary = String::from("seed,trajectories,final_exact_J,output_rule,output_index\n");
    for (rec, j) in records.iter().zip(&finals) {
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            rec.seed,
            rec.trajectories_consumed,
            fmt_f64(*j),
            rec.output_rule,
            rec.output_index.map(|i| i.to_string()).unwrap_or_default()
        );
        for note in &rec.notes {
            log::info!("seed {}: {note}", rec.seed);
        }
    }
    let path = dir.join("summary.csv");
    write_file(&path, &summary)?;
    files.push(path);
    Ok(ExperimentResult {
        records,
        final_exact_j: finals,
        files,
    })
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub value: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub experiments: Vec<ExperimentResult>,
}

impl SweepResult {
    pub fn best(&self) -> &SweepRow {
        self.rows.iter().find(|r| r.best).expect("sweeps are nonempty")
    }

    /// Plain-text table for the terminal.
    pub fn table(&self, column: &str) -> String {
        let mut s = format!("{column:>8}  {:>22}  {:>22}\n", "final exact J (mean)", "std");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8}  {:>22.6}  {:>22.6}{}",
                r.label,
                r.final_mean,
                r.final_std,
                if r.best { "  <- best" } else { "" }
            );
        }
        s
    }
}

fn sweep(
    config: &ExperimentConfig,
    variants: Vec<(String, f64, AlgoConfig)>,
    column: &str,
    file: &str,
) -> Result<SweepResult> {
    config.validate()?;
    create_dir(&config.output.dir)?;
    let experiments: Vec<ExperimentResult> = variants
        .par_iter()
        .map(|(label, _, algo)| {
            let dir = config.output.dir.join(format!("{column}_{label}"));
            run_experiment(&config.with_algo(algo.clone(), dir))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = variants
        .iter()
        .zip(&experiments)
        .map(|((label, value, _), e)| {
            let (m, sd) = mean_std(&e.final_exact_j);
            SweepRow {
                label: label.clone(),
                value: *value,
                final_mean: m,
                final_std: sd,
                best: false,
            }
        })
        .collect();
    // NaN-safe: a diverged mean is -inf and never wins over a finite one
    let best = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.final_mean.total_cmp(&b.1.final_mean))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Validation(vec![format!("{column} grid must not be empty")]))?;
    rows[best].best = true;
    let mut csv = format!("{column},final_exact_J_mean,final_exact_J_std,best\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.label,
            fmt_f64(r.final_mean),
            fmt_f64(r.final_std),
            u8::from(r.best)
        );
    }
    write_file(&config.output.dir.join(file), &csv)?;
    Ok(SweepResult { rows, experiments })
}

/// Reruns the configured algorithm with the mirror map `1/2 ||.||_p^2` for
/// each `p`, writing one experiment per `p` and `sweep_p.csv`.
pub fn sweep_p(config: &ExperimentConfig, p_values: &[f64]) -> Result<SweepResult> {
    let base = config.single_algo()?;
    let bad: Vec<String> = p_values
        .iter()
        .filter(|p| !(p.is_finite() && **p > 1.0))
        .map(|p| format!("p must be finite and greater than 1, got {p}"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let variants = p_values
        .iter()
        .map(|&p| {
            let mut a = base.clone();
            a.mirror = MirrorMap::p_norm(p)?;
            Ok((format!("{p}"), p, a))
        })
        .collect::<Result<Vec<_>>>()?;
    sweep(config, variants, "p", "sweep_p.csv")
}

/// Reruns the configured algorithm with each constant step size, writing
/// one experiment per step size and `grid.csv`.
pub fn learning_rate_grid(config: &ExperimentConfig, alphas: &[f64]) -> Result<SweepResult> {
    let base = config.single_algo()?;
    let variants = alphas
        .iter()
        .map(|&a| {
            let mut c = base.clone();
            c.step_size = algorithms::StepSize::Constant(a);
            (format!("{a}"), a, c)
        })
        .collect();
    sweep(config, variants, "alpha", "grid.csv")
}

/// Aligned comparison of several algorithms on one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub names: Vec<String>,
    pub experiments: Vec<ExperimentResult>,
    pub csv: String,
}

fn unique_names(algos: &[AlgoConfig]) -> Vec<String> {
    let mut seen = std::collections::HashMap::<Algorithm, usize>::new();
    algos
        .iter()
        .map(|a| {
            let n = seen.entry(a.algorithm).or_default();
            *n += 1;
            if *n == 1 {
                a.algorithm.name().to_string()
            } else {
                format!("{}_{}", a.algorithm.name(), n)
            }
        })
        .collect()
}

/// Runs every listed algorithm on the same seeds and writes `compare.csv`,
/// indexed by cumulative trajectories. Each column holds, for every budget,
/// the seed-mean of the last logged row that used at most that many
/// trajectories (exact `J` with oracle logging, estimated return otherwise),
/// and is empty before the algorithm's first logged row.
pub fn compare(config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let algos = config.algo.as_slice();
    let names = unique_names(algos);
    create_dir(&config.output.dir)?;
    let experiments: Vec<ExperimentResult> = algos
        .par_iter()
        .zip(&names)
        .map(|(a, name)| run_experiment(&config.with_algo(a.clone(), config.output.dir.join(name))))
        .collect::<Result<_>>()?;

    let series: Vec<Vec<(usize, f64, f64)>> = experiments
        .iter()
        .map(|e| {
            let first = &e.records[0];
            (0..first.rows.len())
                .map(|i| {
                    let vals: Vec<f64> = e
                        .records
                        .iter()
                        .map(|r| {
                            let row = &r.rows[i];
                            if config.oracle_logging {
                                row.exact_j.unwrap_or(f64::NAN)
                            } else {
                                row.est_return
                            }
                        })
                        .collect();
                    let (m, s) = mean_std(&vals);
                    (first.rows[i].trajectories, m, s)
                })
                .collect()
        })
        .collect();
    let mut xs: Vec<usize> = series.iter().flatten().map(|(x, _, _)| *x).collect();
    xs.sort_unstable();
    xs.dedup();

    let mut csv = String::from("trajectories");
    for n in &names {
        let _ = write!(csv, ",{n}_mean,{n}_std");
    }
    csv.push('\n');
    let mut cursor = vec![0usize; series.len()];
    for &x in &xs {
        let _ = write!(csv, "{x}");
        for (k, s) in series.iter().enumerate() {
            while cursor[k] < s.len() && s[cursor[k]].0 <= x {
                cursor[k] += 1;
            }
            if cursor[k] == 0 {
                csv.push_str(",,");
            } else {
                let (_, m, sd) = s[cursor[k] - 1];
                let _ = write!(csv, ",{},{}", fmt_f64(m), fmt_f64(sd));
            }
        }
        csv.push('\n');
    }
    write_file(&config.output.dir.join("compare.csv"), &csv)?;
    Ok(Comparison {
        names,
        experiments,
        csv,
    })
}

/// Exact quantities at the first seed's initial parameters: return,
/// analytic, enumerated and finite-difference gradients, assumption
/// constants, and on the corridor the value curve over `p(right)`.
pub fn oracle_report(config: &ExperimentConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let algo = &config.algo.as_slice()[0];
    let (mdp, features) = config.env.build()?;
    let theta = algorithms::initial_theta(algo, &features, config.seeds[0])?;
    let policy = SoftmaxLinearPolicy::new(features.clone(), theta.clone())?;
    let constants = assumption_constants(&policy, &mdp)?;
    let mut report = json!({
        "env": config.env,
        "seed": config.seeds[0],
        "theta": theta,
        "exact_return": oracle::exact_return(&mdp, &policy)?,
        "analytic_gradient": oracle::analytic_gradient(&mdp, &policy)?,
        "finite_difference_gradient": oracle::fd_return_gradient(&mdp, &policy, oracle::FD_STEP)?,
        "assumption_constants": {
            "g_bound": constants.g_bound,
            "f_bound": constants.f_bound,
            "g_grid": constants.g_grid,
            "f_grid": constants.f_grid,
            "lipschitz": constants.lipschitz,
            "sigma_sq": constants.sigma_sq,
        },
    });
    match config.env {
        EnvConfig::ShortCorridor { .. } => {
            let curve = oracle::corridor_value_curve(&oracle::probability_grid(0.005))?;
            let (p_best, v_best) = curve
                .iter()
                .copied()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("grid is nonempty");
            report["corridor_value_curve"] = json!({
                "p_right": curve.iter().map(|c| c.0).collect::<Vec<_>>(),
                "value": curve.iter().map(|c| c.1).collect::<Vec<_>>(),
                "argmax_p": p_best,
                "max_value": v_best,
            });
        }
        EnvConfig::RandomMdp { h_max, .. } => {
            let limits = oracle::EnumerationLimits::new(h_max);
            let grad = oracle::exact_gradient_with(&mdp, &policy, limits)?;
            let (ret, tail) = oracle::enumerated_return(&mdp, &policy, limits)?;
            report["enumeration"] = json!({
                "horizon_cap": h_max,
                "tail_mass": tail,
                "expected_return": ret,
                "gradient": grad,
            });
        }
    }
    Ok(report)
}
