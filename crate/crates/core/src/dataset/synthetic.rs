//! Synthetic train/test splits with inverted per-type answer priors.
//!
//! Each sample's feature vector is `[gain · onehot(qtype), onehot(answer) + noise]`.
//! The type block is a shortcut that predicts the answer only through the
//! training prior; the evidence block carries the real signal. Test priors
//! reverse the rank order of the training priors, so a model that leans on
//! the shortcut is penalised at test time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnswerVocab, Interner, QTypeRegistry, Record, ANNOTATORS_PER_QUESTION};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Vec64};

pub const PRESETS: [&str; 3] = ["default", "mild", "severe"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub preset: String,
    pub num_types: usize,
    pub num_answers: usize,
    pub train_priors: Vec<Vec<f64>>,
    pub test_priors: Vec<Vec<f64>>,
    pub evidence_noise_sigma: f64,
    pub type_signal_gain: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl ShiftConfig {
    pub fn feature_dim(&self) -> usize {
        self.num_types + self.num_answers
    }

    pub fn priors(&self, split: Split) -> &[Vec<f64>] {
        match split {
            Split::Train => &self.train_priors,
            Split::Test => &self.test_priors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_types == 0 {
            return Err(Error::Config(
                "at least one question type is required".into(),
            ));
        }
        if self.num_answers < 2 {
            return Err(Error::Config("at least two answers are required".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("split sizes must be positive".into()));
        }
        if !(self.evidence_noise_sigma >= 0.0 && self.evidence_noise_sigma.is_finite()) {
            return Err(Error::Config(
                "evidence noise sigma must be finite and >= 0".into(),
            ));
        }
        if !(self.type_signal_gain >= 0.0 && self.type_signal_gain.is_finite()) {
            return Err(Error::Config(
                "type signal gain must be finite and >= 0".into(),
            ));
        }
        for (name, priors) in [("train", &self.train_priors), ("test", &self.test_priors)] {
            if priors.len() != self.num_types {
                return Err(Error::Config(format!(
                    "{name} priors: expected {} rows, got {}",
                    self.num_types,
                    priors.len()
                )));
            }
            for (k, p) in priors.iter().enumerate() {
                if p.len() != self.num_answers {
                    return Err(Error::Config(format!("{name} prior {k} has wrong length")));
                }
                if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Config(format!(
                        "{name} prior {k} has a negative entry"
                    )));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("{name} prior {k} sums to {sum}")));
                }
            }
        }
        Ok(())
    }
}

fn zipf(n: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Rank reversal: the most probable entry receives the smallest probability,
/// the second receives the second smallest, and so on. Ties keep index order.
pub fn reverse_prior(prior: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..prior.len()).collect();
    order.sort_by(|&a, &b| prior[b].total_cmp(&prior[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; prior.len()];
    let n = order.len();
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = prior[order[n - 1 - rank]];
    }
    out
}

/// Presets share K=5, |Ω|=10, 5000/2000 samples, σ=0.5 and gain 1; they differ
/// in the Zipf exponent of the training priors (mild 0.5, default 1, severe 2).
///
/// Type `k` ranks answers starting at `k · (|Ω|/K)` and wrapping around.
pub fn make_shift_config(preset: &str) -> Result<ShiftConfig> {
    let exponent = match preset {
        "default" => 1.0,
        "mild" => 0.5,
        "severe" => 2.0,
        _ => {
            return Err(Error::UnknownPreset {
                name: preset.to_string(),
                available: PRESETS.join(", "),
            })
        }
    };
    let (num_types, num_answers) = (5, 10);
    let base = zipf(num_answers, exponent);
    let stride = (num_answers / num_types).max(1);
    let train_priors: Vec<Vec<f64>> = (0..num_types)
        .map(|k| {
            let mut p = vec![0.0; num_answers];
            for (rank, &mass) in base.iter().enumerate() {
                p[(k * stride + rank) % num_answers] = mass;
            }
            p
        })
        .collect();
    let test_priors = train_priors.iter().map(|p| reverse_prior(p)).collect();
    Ok(ShiftConfig {
        preset: preset.to_string(),
        num_types,
        num_answers,
        train_priors,
        test_priors,
        evidence_noise_sigma: 0.5,
        type_signal_gain: 1.0,
        n_train: 5000,
        n_test: 2000,
        seed: 0,
    })
}

/// Answer names chosen so the category rule yields all three report columns.
pub fn synthetic_answer_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i {
            0 => "yes".to_string(),
            1 => "no".to_string(),
            2..=5 => (i - 2).to_string(),
            _ => format!("answer{i}"),
        })
        .collect()
}

pub fn synthetic_qtype_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("type{k}")).collect()
}

/// Draws one split. Uses the substream labeled by the split name, so train and
/// test are independent of each other and of generation order.
pub fn sample_dataset(config: &ShiftConfig, split: Split, rng: &Rng) -> Result<Vec<Record>> {
    config.validate()?;
    let mut stream = rng.substream(split.label());
    let n = match split {
        Split::Train => config.n_train,
        Split::Test => config.n_test,
    };
    let priors = config.priors(split);
    let k_types = config.num_types;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let qtype = stream.below(k_types);
        let answer = stream.categorical(&priors[qtype]);
        let mut features = vec![0.0; config.feature_dim()];
        features[qtype] = config.type_signal_gain;
        for j in 0..config.num_answers {
            let signal = if j == answer { 1.0 } else { 0.0 };
            let noise = if config.evidence_noise_sigma > 0.0 {
                config.evidence_noise_sigma * stream.normal()
            } else {
                0.0
            };
            features[k_types + j] = signal + noise;
        }
        records.push(Record {
            question_id: format!("{}-{i:06}", split.label()),
            qtype,
            answer_counts: BTreeMap::from([(answer, ANNOTATORS_PER_QUESTION)]),
            features: Some(Vec64::new(features)?),
        });
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: ShiftConfig,
    pub vocab: AnswerVocab,
    pub registry: QTypeRegistry,
    pub train: Vec<Record>,
    pub test: Vec<Record>,
}

/// Both splits from `config.seed`.
pub fn generate(config: &ShiftConfig) -> Result<SyntheticDataset> {
    let rng = Rng::new(config.seed);
    Ok(SyntheticDataset {
        config: config.clone(),
        vocab: Interner::from_names(synthetic_answer_names(config.num_answers))?,
        registry: Interner::from_names(synthetic_qtype_names(config.num_types))?,
        train: sample_dataset(config, Split::Train, &rng)?,
        test: sample_dataset(config, Split::Test, &rng)?,
    })
}
