//! Mirror maps and the Bregman geometry built on them.
//!
//! The potential is `psi(x) = 1/2 ||x||_p^2` (Euclidean when `p = 2`). Its
//! gradient and the gradient of its conjugate are the p-norm link functions
//!
//! ```text
//! grad psi_j(x)   = sign(x_j) |x_j|^(p-1) / ||x||_p^(p-2)
//! grad psi*_j(y)  = sign(y_j) |y_j|^(q-1) / ||y||_q^(q-2),   1/p + 1/q = 1
//! ```
//!
//! which are inverse to each other, so the proximal step of a linear function
//! has the closed form `grad psi*(grad psi(theta) + alpha g)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vecops::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorKind {
    Euclidean,
    PNorm,
}

/// A mirror map `psi = 1/2 ||.||_p^2` with its strict-convexity constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MirrorSpec", into = "MirrorSpec")]
pub struct MirrorMap {
    kind: MirrorKind,
    p: f64,
    q: f64,
    zeta: f64,
}

/// Serialized form of a [`MirrorMap`]: `{"kind": "euclidean"}` or
/// `{"kind": "p_norm", "p": 3.0, "zeta": 1.0}` (`zeta` optional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MirrorSpec {
    Euclidean {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zeta: Option<f64>,
    },
    PNorm {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zeta: Option<f64>,
    },
}

impl TryFrom<MirrorSpec> for MirrorMap {
    type Error = Error;

    fn try_from(spec: MirrorSpec) -> Result<Self> {
        match spec {
            MirrorSpec::Euclidean { zeta: None } => Ok(MirrorMap::euclidean()),
            MirrorSpec::Euclidean { zeta: Some(z) } => MirrorMap::euclidean().with_zeta(z),
            MirrorSpec::PNorm { p, zeta: None } => MirrorMap::p_norm(p),
            MirrorSpec::PNorm { p, zeta: Some(z) } => MirrorMap::p_norm(p)?.with_zeta(z),
        }
    }
}

impl From<MirrorMap> for MirrorSpec {
    fn from(map: MirrorMap) -> Self {
        match map.kind {
            MirrorKind::Euclidean => MirrorSpec::Euclidean {
                zeta: (map.zeta != 1.0).then_some(map.zeta),
            },
            MirrorKind::PNorm => MirrorSpec::PNorm {
                p: map.p,
                zeta: (map.zeta != default_zeta(map.p)).then_some(map.zeta),
            },
        }
    }
}

/// Default strict-convexity constant in the Euclidean norm: `p - 1` on
/// `(1, 2]`, and 1 for `p > 2` where no dimension-free constant exists.
pub fn default_zeta(p: f64) -> f64 {
    if p <= 2.0 {
        p - 1.0
    } else {
        1.0
    }
}

impl MirrorMap {
    pub fn euclidean() -> Self {
        Self {
            kind: MirrorKind::Euclidean,
            p: 2.0,
            q: 2.0,
            zeta: 1.0,
        }
    }

    /// `psi = 1/2 ||.||_p^2` with the default `zeta`.
    pub fn p_norm(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Argument(format!("p-norm mirror map needs p > 1, got {p}")));
        }
        if p > 2.0 {
            log::warn!("p = {p} > 2: psi is not strongly convex in l2 uniformly in dimension; using zeta = 1");
        }
        Ok(Self {
            kind: MirrorKind::PNorm,
            p,
            q: p / (p - 1.0),
            zeta: default_zeta(p),
        })
    }

    pub fn with_zeta(mut self, zeta: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::Argument(format!("zeta must be positive, got {zeta}")));
        }
        self.zeta = zeta;
        Ok(self)
    }

    pub fn kind(&self) -> MirrorKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// `psi(x) = 1/2 ||x||_p^2`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        match self.kind {
            MirrorKind::Euclidean => 0.5 * dot(x, x),
            MirrorKind::PNorm => {
                let n = p_norm(x, self.p);
                0.5 * n * n
            }
        }
    }

    /// `grad psi(x)`; the origin maps to the origin.
    pub fn grad_psi(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            MirrorKind::Euclidean => x.to_vec(),
            MirrorKind::PNorm => link(x, self.p),
        }
    }

    /// `grad psi*(y)`, the inverse of [`grad_psi`](Self::grad_psi).
    pub fn grad_psi_star(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            MirrorKind::Euclidean => y.to_vec(),
            MirrorKind::PNorm => link(y, self.q),
        }
    }

    /// `D(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>`.
    pub fn bregman_divergence(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let gy = self.grad_psi(y);
        let inner: f64 = gy.iter().zip(x.iter().zip(y)).map(|(g, (a, b))| g * (a - b)).sum();
        // D >= 0 in exact arithmetic; clip the rounding noise
        (self.psi(x) - self.psi(y) - inner).max(0.0)
    }

    /// `argmin_w { <-g, w> + D(w, theta) / alpha }`, the ascent-form mirror step
    /// for an objective whose gradient estimate is `g`.
    pub fn prox_step(&self, alpha: f64, g: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_step(alpha)?;
        check_dim(theta.len(), g.len(), "gradient vs parameter dimension")?;
        Ok(match self.kind {
            MirrorKind::Euclidean => theta.iter().zip(g).map(|(t, gi)| t + alpha * gi).collect(),
            MirrorKind::PNorm => {
                let mut dual = self.grad_psi(theta);
                for (d, gi) in dual.iter_mut().zip(g) {
                    *d += alpha * gi;
                }
                self.grad_psi_star(&dual)
            }
        })
    }

    /// Bregman gradient mapping of `T(.) = <-g, .>` at `theta`:
    /// `(theta - prox_step(alpha, g, theta)) / alpha`.
    ///
    /// In the Euclidean case this is `grad T = -g`, returned in closed form so
    /// that `theta - alpha * G` reproduces `prox_step` exactly.
    pub fn bregman_gradient(&self, alpha: f64, g: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if self.kind == MirrorKind::Euclidean {
            check_step(alpha)?;
            check_dim(theta.len(), g.len(), "gradient vs parameter dimension")?;
            return Ok(g.iter().map(|x| -x).collect());
        }
        let next = self.prox_step(alpha, g, theta)?;
        Ok(theta.iter().zip(&next).map(|(t, n)| (t - n) / alpha).collect())
    }

    /// Euclidean norm of the Bregman gradient mapping.
    pub fn bregman_gradient_norm(&self, alpha: f64, g: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(norm2(&self.bregman_gradient(alpha, g, theta)?))
    }

    /// Whether `theta` is an `epsilon`-approximate first-order stationary point
    /// for the gradient `g`.
    pub fn is_fosp(&self, alpha: f64, g: &[f64], theta: &[f64], epsilon: f64) -> Result<bool> {
        Ok(self.bregman_gradient_norm(alpha, g, theta)? <= epsilon)
    }
}

fn check_step(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("step size must be positive and finite, got {alpha}")))
    }
}

/// `||x||_p`, computed on the max-scaled vector to avoid overflow.
pub fn p_norm(x: &[f64], p: f64) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}

// sign(x_j) |x_j|^(r-1) / ||x||_r^(r-2), evaluated as ||x|| (|x_j|/||x||)^(r-1).
fn link(x: &[f64], r: f64) -> Vec<f64> {
    if r == 2.0 {
        return x.to_vec();
    }
    let n = p_norm(x, r);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                v.signum() * n * (v.abs() / n).powf(r - 1.0)
            }
        })
        .collect()
}
