//! Mini-batch SGD over any loss in the family.
//!
//! Records are first put in canonical question-id order, then shuffled per
//! epoch with the substream `shuffle/epoch-<e>` of the configured seed, so the
//! visiting order depends only on the seed and epoch. Per-batch gradients are
//! summed in visiting order and divided by the batch size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::ClassifierModel;
use crate::dataset::{question_id_order, soft_targets, Record};
use crate::error::{Error, Result};
use crate::evaluate::question_accuracy;
use crate::losses::{loss_forward, LossConfig, LossKind};
use crate::margin::MarginTable;
use crate::numerics::{Mat64, Rng};

pub const DEFAULT_LEARNING_RATE: f64 = 0.2;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_EPOCHS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Source of per-type margins; required for `adavqa`.
    pub margin_table: Option<MarginTable>,
}

impl TrainConfig {
    pub fn new(loss: LossConfig, seed: u64) -> Self {
        TrainConfig {
            loss,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            margin_table: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.loss.kind == LossKind::Adavqa && self.margin_table.is_none() {
            return Err(Error::Config("adavqa training needs a margin table".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean soft accuracy of predictions made during the epoch, before each
    /// example's update is applied.
    pub train_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    /// The log without wall-clock times, for reproducibility comparisons.
    pub fn deterministic_part(&self) -> Vec<(usize, f64, f64)> {
        self.epochs
            .iter()
            .map(|e| (e.epoch, e.mean_loss, e.train_accuracy))
            .collect()
    }
}

/// A record resolved into model inputs.
pub(crate) struct Example<'a> {
    pub record: &'a Record,
    pub features: &'a [f64],
    pub targets: Vec<f64>,
    pub margins: Option<Vec<f64>>,
}

pub(crate) fn prepare<'a>(
    records: &'a [Record],
    model: &ClassifierModel,
    loss: &LossConfig,
    table: Option<&MarginTable>,
) -> Result<Vec<Example<'a>>> {
    let classes = model.class_count();
    if let Some(t) = table {
        if loss.kind == LossKind::Adavqa && t.num_answers() != classes {
            return Err(Error::Shape(format!(
                "margin table covers {} answers but the model has {classes} classes",
                t.num_answers()
            )));
        }
    }
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| question_id_order(&a.question_id, &b.question_id));
    sorted
        .into_iter()
        .map(|record| {
            let features = record.features.as_ref().ok_or_else(|| {
                Error::Shape(format!("record {} has no features", record.question_id))
            })?;
            if features.len() != model.feature_dim() {
                return Err(Error::Shape(format!(
                    "record {} has {} features, model expects {}",
                    record.question_id,
                    features.len(),
                    model.feature_dim()
                )));
            }
            let margins = match loss.kind {
                LossKind::Adavqa => {
                    let t =
                        table.ok_or_else(|| Error::Config("adavqa needs a margin table".into()))?;
                    let threshold = loss.entropy_threshold.unwrap_or_default();
                    Some(t.effective_margins(record.qtype, threshold)?.into_inner())
                }
                _ => None,
            };
            Ok(Example {
                record,
                features: features.as_slice(),
                targets: soft_targets(record, classes)?.into_inner(),
                margins,
            })
        })
        .collect()
}

pub fn train(
    model: ClassifierModel,
    records: &[Record],
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainLog)> {
    config.validate()?;
    let mut model = model;
    let examples = prepare(records, &model, &config.loss, config.margin_table.as_ref())?;
    let shuffle_root = Rng::new(config.seed).substream("shuffle");
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.sort_unstable();
        shuffle_root
            .substream(&format!("epoch-{epoch}"))
            .shuffle(&mut order);
        let (mut loss_sum, mut acc_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let mut grad_w = Mat64::zeros(model.weights.rows(), model.weights.cols());
            let mut grad_h = model
                .hidden
                .as_ref()
                .map(|h| Mat64::zeros(h.rows(), h.cols()));
            for &idx in batch {
                let ex = &examples[idx];
                let g = model.backward(
                    &config.loss,
                    ex.features,
                    &ex.targets,
                    ex.margins.as_deref(),
                )?;
                loss_sum += g.loss;
                acc_sum += question_accuracy(g.predicted, &ex.record.answer_counts);
                grad_w.add_scaled(1.0, &g.grad_w)?;
                if let (Some(acc), Some(gh)) = (grad_h.as_mut(), g.grad_hidden.as_ref()) {
                    acc.add_scaled(1.0, gh)?;
                }
            }
            let step = -config.learning_rate / batch.len() as f64;
            model.weights.add_scaled(step, &grad_w)?;
            if let (Some(h), Some(gh)) = (model.hidden.as_mut(), grad_h.as_ref()) {
                h.add_scaled(step, gh)?;
            }
        }
        let n = examples.len().max(1) as f64;
        log.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / n,
            train_accuracy: acc_sum / n,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// Mean loss of `model` over `records` without updating anything.
pub fn mean_loss(
    model: &ClassifierModel,
    records: &[Record],
    loss: &LossConfig,
    table: Option<&MarginTable>,
) -> Result<f64> {
    let examples = prepare(records, model, loss, table)?;
    let mut total = 0.0;
    for ex in &examples {
        let x = model.embed(ex.features)?;
        total += loss_forward(loss, &model.weights, &x, &ex.targets, ex.margins.as_deref())?.loss;
    }
    Ok(total / examples.len().max(1) as f64)
}
