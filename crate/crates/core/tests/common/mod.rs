//! Test-side oracles, written independently of the library code they check.
#![allow(dead_code)]

use mpo_core::mdp::{make_random_mdp, Mdp};
use mpo_core::policy::FeatureMap;
use std::sync::Arc;

pub const FIXTURE_SEEDS: [u64; 3] = [0, 1, 2];

/// Two-state, two-action random fixture used throughout the oracle checks.
pub fn two_state(seed: u64) -> (Mdp, Arc<FeatureMap>) {
    let mdp = make_random_mdp(2, 2, seed, 0.95, 20).unwrap();
    (mdp, Arc::new(FeatureMap::tabular(2, 2)))
}

/// A three-state tree: s0 branches to s1 or s2, both of which terminate.
/// Every episode ends within two steps, so enumeration is complete.
pub fn acyclic() -> (Mdp, Arc<FeatureMap>) {
    let t = vec![
        vec![vec![0.0, 0.7, 0.3, 0.0], vec![0.0, 0.2, 0.8, 0.0]],
        vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]],
        vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]],
    ];
    let r = vec![vec![0.5, -0.25], vec![1.0, -1.0], vec![-0.5, 0.75]];
    let mdp = Mdp::new(t, r, vec![1.0, 0.0, 0.0], 0.9, 5, 1.0).unwrap();
    (mdp, Arc::new(FeatureMap::tabular(3, 2)))
}

/// Start value of the corridor when "right" has probability `p`, by
/// Cramer's rule on the three Bellman equations.
pub fn corridor_value_cramer(p: f64) -> f64 {
    let q = 1.0 - p;
    // (1-q) V1 - p V2          = -1
    // -p V1 + V2 - q V3        = -1
    //        -q V2 + V3        = -1
    let a = [[1.0 - q, -p, 0.0], [-p, 1.0, -q], [0.0, -q, 1.0]];
    let b = [-1.0, -1.0, -1.0];
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut a1 = a;
    for i in 0..3 {
        a1[i][0] = b[i];
    }
    det(a1) / det(a)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn batch_mean(gs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; gs[0].len()];
    for g in gs {
        for (o, x) in out.iter_mut().zip(g) {
            *o += x;
        }
    }
    out.iter().map(|x| x / gs.len() as f64).collect()
}

fn pnorm(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn half_sq_pnorm(x: &[f64], p: f64) -> f64 {
    0.5 * pnorm(x, p).powi(2)
}

fn grad_half_sq_pnorm(x: &[f64], p: f64) -> Vec<f64> {
    let n = pnorm(x, p);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v.signum() * v.abs().powf(p - 1.0) * n.powf(2.0 - p)).collect()
}

/// `<-g, w> + D(w, theta) / alpha` with `D` the Bregman divergence of
/// `0.5 ||.||_p^2`.
pub fn prox_objective(p: f64, alpha: f64, g: &[f64], theta: &[f64], w: &[f64]) -> f64 {
    let gt = grad_half_sq_pnorm(theta, p);
    let lin: f64 = gt.iter().zip(w.iter().zip(theta)).map(|(a, (x, y))| a * (x - y)).sum();
    let d = half_sq_pnorm(w, p) - half_sq_pnorm(theta, p) - lin;
    -g.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + d / alpha
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Brute-force minimizer of the proximal objective by cyclic coordinate
/// descent with golden-section line searches.
pub fn numeric_prox(p: f64, alpha: f64, g: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut w = theta.to_vec();
    let mut width = 4.0 * (1.0 + alpha * g.iter().map(|x| x.abs()).sum::<f64>() + pnorm(theta, 2.0));
    for _ in 0..400 {
        let before = w.clone();
        for i in 0..w.len() {
            let f = |x: f64| {
                let mut v = w.clone();
                v[i] = x;
                prox_objective(p, alpha, g, theta, &v)
            };
            w[i] = golden_section(f, w[i] - width, w[i] + width, 1e-13);
        }
        let moved = w.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        width = (4.0 * moved).max(1e-6);
        if moved < 1e-12 {
            break;
        }
    }
    w
}

/// Absolute error allowed for an empirical frequency of `n` draws with true
/// probability `p`: three standard errors.
pub fn three_se(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
