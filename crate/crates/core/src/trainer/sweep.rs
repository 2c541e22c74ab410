//! Baseline / NSL / fixed-margin / adapted-margin comparison grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::init_model;
use super::sgd::{train, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use crate::dataset::{build_count_table, AnswerVocab, QTypeRegistry, Record};
use crate::error::{Error, Result};
use crate::evaluate::mean_question_accuracy;
use crate::losses::{LossConfig, LossKind, DEFAULT_SCALE};
use crate::margin::{MarginTable, DEFAULT_ENTROPY_THRESHOLD, DEFAULT_EPSILON};
use crate::numerics::Rng;

pub const DEFAULT_FIXED_MARGINS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Settings shared by every cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub scale: f64,
    pub entropy_threshold: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            scale: DEFAULT_SCALE,
            entropy_threshold: DEFAULT_ENTROPY_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            hidden_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub kind: LossKind,
    pub fixed_margin: Option<f64>,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single seed).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub settings: SweepSettings,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, label: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Tab-separated grid, accuracies in percent.
    pub fn render(&self) -> String {
        let mut out = String::from("model\tmargin\tmean_acc\tstd_acc\tper_seed\n");
        for r in &self.rows {
            let margin = match (r.kind, r.fixed_margin) {
                (_, Some(m)) => format!("{m}"),
                (LossKind::Adavqa, None) => "adapted".into(),
                _ => "-".into(),
            };
            let per_seed: Vec<String> = r
                .accuracies
                .iter()
                .map(|a| format!("{:.2}", 100.0 * a))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{margin}\t{:.2}\t{:.2}\t{}",
                r.label,
                100.0 * r.mean,
                100.0 * r.std,
                per_seed.join(",")
            );
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains `ce`, `nsl`, `lmc@m` for each fixed margin and `adavqa` for every
/// seed and scores each on `test`. Within a seed all rows start from the same
/// initial weights. Margins come from the training split's counts.
pub fn margin_sweep(
    train_records: &[Record],
    test_records: &[Record],
    vocab: &AnswerVocab,
    registry: &QTypeRegistry,
    settings: &SweepSettings,
    fixed_margins: &[f64],
    seeds: &[u64],
) -> Result<SweepReport> {
    if fixed_margins.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "margin sweep needs at least one margin and one seed".into(),
        ));
    }
    let feature_dim = train_records
        .iter()
        .find_map(|r| r.features.as_ref().map(|f| f.len()))
        .ok_or_else(|| Error::Config("training records carry no features".into()))?;
    let table = MarginTable::from_counts(
        &build_count_table(train_records, vocab, registry)?,
        settings.epsilon,
    )?;

    let mut cells: Vec<(String, LossConfig)> = vec![
        ("ce".into(), LossConfig::ce()),
        ("nsl".into(), LossConfig::nsl(settings.scale)?),
    ];
    for &m in fixed_margins {
        cells.push((format!("lmc@{m}"), LossConfig::lmc(settings.scale, m)?));
    }
    cells.push((
        "adavqa".into(),
        LossConfig::adavqa(settings.scale, settings.entropy_threshold)?,
    ));

    let mut rows = Vec::with_capacity(cells.len());
    for (label, loss) in cells {
        let mut accuracies = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let model = init_model(
                feature_dim,
                vocab.len(),
                settings.hidden_dim,
                &mut Rng::new(seed).substream("init"),
            )?;
            let config = TrainConfig {
                loss,
                learning_rate: settings.learning_rate,
                epochs: settings.epochs,
                batch_size: settings.batch_size,
                seed,
                margin_table: (loss.kind == LossKind::Adavqa).then(|| table.clone()),
            };
            let (trained, _) = train(model, train_records, &config)?;
            accuracies.push(mean_question_accuracy(&trained, test_records, loss.kind)?);
        }
        let (mean, std) = mean_std(&accuracies);
        rows.push(SweepRow {
            label,
            kind: loss.kind,
            fixed_margin: loss.fixed_margin,
            seeds: seeds.to_vec(),
            accuracies,
            mean,
            std,
        });
    }
    Ok(SweepReport {
        settings: settings.clone(),
        rows,
    })
}
