//! Analytic-vs-finite-difference gradient comparison on random instances.
//!
//! Each trial draws a head `W` (entries `N(0, 1/d)`), an input `z ~ N(0, I)`,
//! one to three soft targets from `{1/3, 2/3, 1}` and margins `U[0, 1]`, then
//! compares [`ClassifierModel::backward`] against central differences of the
//! forward loss with step `1e-5`. The error of one gradient block is
//! `‖g − ĝ‖₂ / max(‖g‖₂, ‖ĝ‖₂)`; the check reports the maximum over blocks
//! (`x`, `W`, and the hidden layer when present) and trials.

use std::cell::RefCell;

use super::model::ClassifierModel;
use crate::error::{Error, Result};
use crate::losses::{loss_forward, LossConfig, LossKind, DEFAULT_SCALE};
use crate::numerics::{finite_diff_grad, l2_norm, Mat64, Rng};

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSpec {
    pub kind: LossKind,
    pub feature_dim: usize,
    pub class_count: usize,
    pub trials: usize,
    /// Inserts a `tanh` layer of this width between the input and the head.
    pub hidden_dim: Option<usize>,
    pub scale: f64,
    /// Replace drawn margins with zeros (instances are otherwise unchanged).
    pub zero_margins: bool,
}

impl GradcheckSpec {
    pub fn new(kind: LossKind, feature_dim: usize, class_count: usize, trials: usize) -> Self {
        GradcheckSpec {
            kind,
            feature_dim,
            class_count,
            trials,
            hidden_dim: None,
            scale: DEFAULT_SCALE,
            zero_margins: false,
        }
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let denom = l2_norm(analytic).max(l2_norm(numeric));
    if denom == 0.0 {
        0.0
    } else {
        l2_norm(&diff) / denom
    }
}

fn gaussian(rows: usize, cols: usize, sd: f64, rng: &mut Rng) -> Mat64 {
    let data = (0..rows * cols).map(|_| sd * rng.normal()).collect();
    Mat64::new(rows, cols, data).expect("finite gaussian draws")
}

/// Convenience form of [`gradcheck_with`] for a bare head.
pub fn gradcheck(
    kind: LossKind,
    feature_dim: usize,
    class_count: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<f64> {
    gradcheck_with(
        &GradcheckSpec::new(kind, feature_dim, class_count, trials),
        rng,
    )
}

pub fn gradcheck_with(spec: &GradcheckSpec, rng: &mut Rng) -> Result<f64> {
    if spec.trials == 0 || spec.feature_dim == 0 || spec.class_count == 0 {
        return Err(Error::Config(
            "gradcheck needs positive trials and dimensions".into(),
        ));
    }
    let head_in = spec.hidden_dim.unwrap_or(spec.feature_dim);
    let mut worst: f64 = 0.0;
    for _ in 0..spec.trials {
        let hidden = spec.hidden_dim.map(|h| {
            gaussian(
                h,
                spec.feature_dim,
                1.0 / (spec.feature_dim as f64).sqrt(),
                rng,
            )
        });
        let weights = gaussian(
            spec.class_count,
            head_in,
            1.0 / (head_in as f64).sqrt(),
            rng,
        );
        let z: Vec<f64> = (0..spec.feature_dim).map(|_| rng.normal()).collect();
        let mut targets = vec![0.0; spec.class_count];
        let active = 1 + rng.below(3);
        for _ in 0..active {
            targets[rng.below(spec.class_count)] = [1.0 / 3.0, 2.0 / 3.0, 1.0][rng.below(3)];
        }
        let mut margins: Vec<f64> = (0..spec.class_count).map(|_| rng.next_f64()).collect();
        let fixed_margin = rng.next_f64();
        if spec.zero_margins {
            margins.iter_mut().for_each(|m| *m = 0.0);
        }

        let config = match spec.kind {
            LossKind::Ce => LossConfig::ce(),
            LossKind::Nsl => LossConfig::nsl(spec.scale)?,
            LossKind::Lmc => LossConfig::lmc(spec.scale, fixed_margin)?,
            LossKind::Adavqa => LossConfig::adavqa(spec.scale, 0.0)?,
        };
        let margins = (spec.kind == LossKind::Adavqa).then_some(margins.as_slice());
        let model = ClassifierModel::new(weights, hidden)?;
        let analytic = model.backward(&config, &z, &targets, margins)?;

        let loss_at = |m: &ClassifierModel, input: &[f64]| -> f64 {
            m.embed(input)
                .and_then(|x| loss_forward(&config, &m.weights, &x, &targets, margins))
                .map_or(f64::NAN, |o| o.loss)
        };

        // The input gradient is only exposed for a bare head, where z = x.
        if model.hidden.is_none() {
            let out = crate::losses::loss_backward(&config, &model.weights, &z, &targets, margins)?;
            let numeric = finite_diff_grad(|zp| loss_at(&model, zp), &z, FD_STEP)?;
            worst = worst.max(relative_error(
                out.grad_x.as_deref().unwrap_or_default(),
                &numeric,
            ));
        }

        // One scratch copy per trial; each probe overwrites its parameters.
        let scratch = RefCell::new(model.clone());
        let numeric_w = finite_diff_grad(
            |wp| {
                let mut m = scratch.borrow_mut();
                m.weights.as_mut_slice().copy_from_slice(wp);
                loss_at(&m, &z)
            },
            model.weights.as_slice(),
            FD_STEP,
        )?;
        worst = worst.max(relative_error(analytic.grad_w.as_slice(), &numeric_w));

        if let (Some(h), Some(gh)) = (&model.hidden, &analytic.grad_hidden) {
            scratch.borrow_mut().weights = model.weights.clone();
            let numeric_h = finite_diff_grad(
                |hp| {
                    let mut m = scratch.borrow_mut();
                    if let Some(hm) = m.hidden.as_mut() {
                        hm.as_mut_slice().copy_from_slice(hp);
                    }
                    loss_at(&m, &z)
                },
                h.as_slice(),
                FD_STEP,
            )?;
            worst = worst.max(relative_error(gh.as_slice(), &numeric_h));
        }
    }
    Ok(worst)
}
