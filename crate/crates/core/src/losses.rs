//! The four-loss family over a bias-free classifier head.
//!
//! | kind     | logits for the target term `i`                  |
//! |----------|-------------------------------------------------|
//! | `ce`     | `Wx`                                            |
//! | `nsl`    | `s·cos θ`                                       |
//! | `lmc`    | `s·cos θ`, with `s·m` subtracted from entry `i` |
//! | `adavqa` | `s·(cos θ − m)` for every class, one softmax    |
//!
//! All reduce as `L = Σ_i −a_i log softmax(logits)_i` with soft targets `a`
//! that are not renormalized. `lmc` builds a separate softmax per target
//! term; `adavqa` shares one softmax across all terms.
//!
//! Backward passes go through `∂L/∂cos θ` and the norm Jacobian
//! `J(v) = I/‖v‖ − v vᵀ/‖v‖³`, so gradients of normalized kinds are
//! orthogonal to `x` and to each `W_i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::DEFAULT_ENTROPY_THRESHOLD;
use crate::numerics::{dot, l2_norm, log_sum_exp, normalize_jacobian_apply, Mat64};

pub const DEFAULT_SCALE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Nsl,
    Lmc,
    Adavqa,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Ce, LossKind::Nsl, LossKind::Lmc, LossKind::Adavqa];

    /// Whether logits are built from normalized weights and features.
    pub fn is_normalized(self) -> bool {
        !matches!(self, LossKind::Ce)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Nsl => "nsl",
            LossKind::Lmc => "lmc",
            LossKind::Adavqa => "adavqa",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "nsl" => Ok(LossKind::Nsl),
            "lmc" => Ok(LossKind::Lmc),
            "adavqa" => Ok(LossKind::Adavqa),
            other => Err(Error::Config(format!(
                "unknown loss kind `{other}` (expected ce, nsl, lmc or adavqa)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Scale `s` on cosine logits; unused by `ce`.
    pub scale: f64,
    /// Fixed margin, `lmc` only.
    pub fixed_margin: Option<f64>,
    /// Entropy threshold in bits, `adavqa` only.
    pub entropy_threshold: Option<f64>,
}

impl LossConfig {
    pub fn new(
        kind: LossKind,
        scale: f64,
        fixed_margin: Option<f64>,
        entropy_threshold: Option<f64>,
    ) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        match (kind, fixed_margin) {
            (LossKind::Lmc, None) => {
                return Err(Error::Config("loss lmc requires a fixed margin".into()))
            }
            (LossKind::Lmc, Some(m)) if !(0.0..=1.0).contains(&m) => {
                return Err(Error::Config(format!(
                    "fixed margin must lie in [0, 1], got {m}"
                )))
            }
            (LossKind::Lmc, Some(_)) => {}
            (k, Some(_)) => {
                return Err(Error::Config(format!(
                    "a fixed margin is only valid for lmc, not {k}"
                )))
            }
            (_, None) => {}
        }
        let entropy_threshold = match (kind, entropy_threshold) {
            (LossKind::Adavqa, t) => {
                let t = t.unwrap_or(DEFAULT_ENTROPY_THRESHOLD);
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!(
                        "entropy threshold must be >= 0, got {t}"
                    )));
                }
                Some(t)
            }
            (k, Some(_)) => {
                return Err(Error::Config(format!(
                    "an entropy threshold is only valid for adavqa, not {k}"
                )))
            }
            (_, None) => None,
        };
        Ok(LossConfig {
            kind,
            scale,
            fixed_margin,
            entropy_threshold,
        })
    }

    pub fn ce() -> Self {
        LossConfig {
            kind: LossKind::Ce,
            scale: DEFAULT_SCALE,
            fixed_margin: None,
            entropy_threshold: None,
        }
    }

    pub fn nsl(scale: f64) -> Result<Self> {
        Self::new(LossKind::Nsl, scale, None, None)
    }

    pub fn lmc(scale: f64, margin: f64) -> Result<Self> {
        Self::new(LossKind::Lmc, scale, Some(margin), None)
    }

    pub fn adavqa(scale: f64, threshold: f64) -> Result<Self> {
        Self::new(LossKind::Adavqa, scale, None, Some(threshold))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `cos θ_i` per class; `None` for `ce`.
    pub cos_theta: Option<Vec<f64>>,
    /// Logits fed to the (shared) softmax.
    pub logits: Vec<f64>,
    /// Posterior over classes: `softmax(logits)`.
    pub probs: Vec<f64>,
    pub grad_x: Option<Vec<f64>>,
    pub grad_w: Option<Mat64>,
}

/// `cos θ_i = Ŵ_i · x̂`, clamped to `[−1, 1]`.
pub fn cosine_logits(w: &Mat64, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(w, x)?;
    let xn = nonzero(l2_norm(x), || "feature vector".into())?;
    w.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let wn = nonzero(l2_norm(row), || format!("weight row {i}"))?;
            Ok((dot(row, x) / (wn * xn)).clamp(-1.0, 1.0))
        })
        .collect()
}

fn nonzero(norm: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if norm > 0.0 && norm.is_finite() {
        Ok(norm)
    } else {
        Err(Error::Domain(format!("{} has norm {norm}", what())))
    }
}

fn check_dims(w: &Mat64, x: &[f64]) -> Result<()> {
    if w.cols() != x.len() {
        return Err(Error::Shape(format!(
            "weights have {} columns but feature vector has {} entries",
            w.cols(),
            x.len()
        )));
    }
    Ok(())
}

fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let lse = log_sum_exp(logits);
    (logits.iter().map(|z| (z - lse).exp()).collect(), lse)
}

/// Forward pass plus `∂L/∂logit`-level quantities shared with backward.
struct Pass {
    loss: f64,
    cos_theta: Option<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    /// `∂L/∂cos θ` for normalized kinds, `∂L/∂(Wx)` for ce.
    upstream: Vec<f64>,
}

fn run(
    config: &LossConfig,
    w: &Mat64,
    x: &[f64],
    a: &[f64],
    margins: Option<&[f64]>,
) -> Result<Pass> {
    check_dims(w, x)?;
    let classes = w.rows();
    if a.len() != classes {
        return Err(Error::Shape(format!(
            "{} targets for {classes} classes",
            a.len()
        )));
    }
    if let Some(bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("target {bad} outside [0, 1]")));
    }
    let margins = match (config.kind, margins) {
        (LossKind::Adavqa, Some(m)) => {
            if m.len() != classes {
                return Err(Error::Shape(format!(
                    "{} margins for {classes} classes",
                    m.len()
                )));
            }
            Some(m)
        }
        (LossKind::Adavqa, None) => {
            return Err(Error::Config("adavqa needs per-class margins".into()))
        }
        (k, Some(_)) => {
            return Err(Error::Config(format!(
                "per-class margins are not accepted by {k}"
            )))
        }
        (_, None) => None,
    };
    let a_sum: f64 = a.iter().sum();
    let s = config.scale;

    match config.kind {
        LossKind::Ce => {
            let logits = w.mul_vec(x)?;
            let (probs, lse) = softmax(&logits);
            let loss = a.iter().zip(&logits).map(|(ai, z)| -ai * (z - lse)).sum();
            let upstream = probs.iter().zip(a).map(|(p, ai)| a_sum * p - ai).collect();
            Ok(Pass {
                loss,
                cos_theta: None,
                logits,
                probs,
                upstream,
            })
        }
        LossKind::Nsl | LossKind::Adavqa => {
            let cos = cosine_logits(w, x)?;
            let logits: Vec<f64> = match margins {
                Some(m) => cos.iter().zip(m).map(|(c, mj)| s * (c - mj)).collect(),
                None => cos.iter().map(|c| s * c).collect(),
            };
            let (probs, lse) = softmax(&logits);
            let loss = a.iter().zip(&logits).map(|(ai, z)| -ai * (z - lse)).sum();
            // ∂L/∂p_i = (Σ a) p̂_i − a_i, and ∂p_i/∂cos θ_i = s.
            let upstream = probs
                .iter()
                .zip(a)
                .map(|(p, ai)| s * (a_sum * p - ai))
                .collect();
            Ok(Pass {
                loss,
                cos_theta: Some(cos),
                logits,
                probs,
                upstream,
            })
        }
        LossKind::Lmc => {
            let m = config
                .fixed_margin
                .ok_or_else(|| Error::Config("lmc requires a fixed margin".into()))?;
            let cos = cosine_logits(w, x)?;
            let logits: Vec<f64> = cos.iter().map(|c| s * c).collect();
            let (probs, _) = softmax(&logits);
            let mut loss = 0.0;
            let mut upstream = vec![0.0; classes];
            let mut term = logits.clone();
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                term[i] = s * (cos[i] - m);
                let (q, lse) = softmax(&term);
                loss += -ai * (term[i] - lse);
                for (j, (u, qj)) in upstream.iter_mut().zip(&q).enumerate() {
                    let indicator = if i == j { 1.0 } else { 0.0 };
                    *u += ai * s * (qj - indicator);
                }
                term[i] = logits[i];
            }
            Ok(Pass {
                loss,
                cos_theta: Some(cos),
                logits,
                probs,
                upstream,
            })
        }
    }
}

pub fn loss_forward(
    config: &LossConfig,
    w: &Mat64,
    x: &[f64],
    a: &[f64],
    margins: Option<&[f64]>,
) -> Result<LossOutput> {
    let p = run(config, w, x, a, margins)?;
    Ok(LossOutput {
        loss: p.loss,
        cos_theta: p.cos_theta,
        logits: p.logits,
        probs: p.probs,
        grad_x: None,
        grad_w: None,
    })
}

pub fn loss_backward(
    config: &LossConfig,
    w: &Mat64,
    x: &[f64],
    a: &[f64],
    margins: Option<&[f64]>,
) -> Result<LossOutput> {
    let p = run(config, w, x, a, margins)?;
    let (grad_x, grad_w) = if config.kind.is_normalized() {
        let x_norm = l2_norm(x);
        let x_hat: Vec<f64> = x.iter().map(|v| v / x_norm).collect();
        // u = Σ_i g_i Ŵ_i, grad_x = J(x) u
        let mut u = vec![0.0; x.len()];
        let mut grad_w = Mat64::zeros(w.rows(), w.cols());
        for (i, (row, &g)) in w.row_iter().zip(&p.upstream).enumerate() {
            let w_norm = l2_norm(row);
            for (uk, r) in u.iter_mut().zip(row) {
                *uk += g * r / w_norm;
            }
            let scaled: Vec<f64> = x_hat.iter().map(|v| g * v).collect();
            grad_w
                .row_mut(i)
                .copy_from_slice(&normalize_jacobian_apply(row, &scaled)?);
        }
        (normalize_jacobian_apply(x, &u)?, grad_w)
    } else {
        let grad_x = w.tr_mul_vec(&p.upstream)?;
        let mut grad_w = Mat64::zeros(w.rows(), w.cols());
        for (i, &g) in p.upstream.iter().enumerate() {
            for (gw, xv) in grad_w.row_mut(i).iter_mut().zip(x) {
                *gw = g * xv;
            }
        }
        (grad_x, grad_w)
    };
    Ok(LossOutput {
        loss: p.loss,
        cos_theta: p.cos_theta,
        logits: p.logits,
        probs: p.probs,
        grad_x: Some(grad_x),
        grad_w: Some(grad_w),
    })
}
