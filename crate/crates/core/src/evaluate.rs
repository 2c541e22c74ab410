//! Soft VQA accuracy, per-category / per-type aggregation and embedding export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{question_id_order, soft_score, AnswerVocab, Category, QTypeRegistry, Record};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::losses::{cosine_logits, LossKind};
use crate::numerics::l2_normalize;
use crate::trainer::{argmax, ClassifierModel};

/// `min(1, n/3)` where `n` is the number of annotators who gave `predicted`.
pub fn question_accuracy(predicted: usize, answer_counts: &BTreeMap<usize, u32>) -> f64 {
    soft_score(answer_counts.get(&predicted).copied().unwrap_or(0))
}

fn canonical(records: &[Record]) -> Vec<&Record> {
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| question_id_order(&a.question_id, &b.question_id));
    sorted
}

fn features_of(record: &Record) -> Result<&[f64]> {
    record
        .features
        .as_deref()
        .ok_or_else(|| Error::Shape(format!("record {} has no features", record.question_id)))
}

/// Mean soft accuracy of `model` over `records`, summed in question-id order.
pub fn mean_question_accuracy(
    model: &ClassifierModel,
    records: &[Record],
    kind: LossKind,
) -> Result<f64> {
    let mut total = 0.0;
    for r in canonical(records) {
        let pred = model.predict(features_of(r)?, kind)?;
        total += question_accuracy(pred, &r.answer_counts);
    }
    Ok(total / records.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// Keyed by category label; categories without questions are absent.
    pub per_category: BTreeMap<String, f64>,
    pub category_counts: BTreeMap<String, usize>,
    /// Keyed by question-type name.
    pub per_qtype: BTreeMap<String, f64>,
    pub qtype_counts: BTreeMap<String, usize>,
    pub n_questions: usize,
}

impl AccuracyReport {
    /// Tab-separated table: a Y/N, Num., Other, All header, then per-type rows.
    pub fn render(&self) -> String {
        let cell = |label: &str| {
            self.per_category
                .get(label)
                .map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
        };
        let mut out = String::from("Y/N\tNum.\tOther\tAll\n");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.2}",
            cell(Category::YesNo.label()),
            cell(Category::Number.label()),
            cell(Category::Other.label()),
            100.0 * self.overall
        );
        let count = |label: &str| self.category_counts.get(label).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            count(Category::YesNo.label()),
            count(Category::Number.label()),
            count(Category::Other.label()),
            self.n_questions
        );
        out.push_str("\nqtype\taccuracy\tquestions\n");
        for (name, acc) in &self.per_qtype {
            let _ = writeln!(
                out,
                "{name}\t{:.2}\t{}",
                100.0 * acc,
                self.qtype_counts[name]
            );
        }
        out
    }
}

/// Scores every record and aggregates soft accuracy overall, per category of
/// the record's top answer (`categories` is indexed by answer id) and per
/// question type.
pub fn evaluate_model(
    model: &ClassifierModel,
    records: &[Record],
    kind: LossKind,
    categories: &[Category],
    registry: &QTypeRegistry,
) -> Result<AccuracyReport> {
    if categories.len() != model.class_count() {
        return Err(Error::Shape(format!(
            "{} answer categories for a model with {} classes",
            categories.len(),
            model.class_count()
        )));
    }
    let mut total = 0.0;
    let mut cat_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut type_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in canonical(records) {
        let acc = question_accuracy(model.predict(features_of(r)?, kind)?, &r.answer_counts);
        total += acc;
        let top = r.top_answer().ok_or_else(|| {
            Error::Referential(format!("record {} has no answers", r.question_id))
        })?;
        let cat = categories
            .get(top)
            .ok_or_else(|| Error::Index(format!("answer id {top} outside the category list")))?;
        let e = cat_sum.entry(cat.label().to_string()).or_default();
        e.0 += acc;
        e.1 += 1;
        let qt = registry
            .name(r.qtype)
            .ok_or_else(|| Error::Index(format!("question type {} is not registered", r.qtype)))?;
        let e = type_sum.entry(qt.to_string()).or_default();
        e.0 += acc;
        e.1 += 1;
    }
    let split = |m: BTreeMap<String, (f64, usize)>| {
        let means = m
            .iter()
            .map(|(k, (s, n))| (k.clone(), s / *n as f64))
            .collect();
        let counts = m.into_iter().map(|(k, (_, n))| (k, n)).collect();
        (means, counts)
    };
    let (per_category, category_counts) = split(cat_sum);
    let (per_qtype, qtype_counts) = split(type_sum);
    Ok(AccuracyReport {
        overall: total / records.len().max(1) as f64,
        per_category,
        category_counts,
        per_qtype,
        qtype_counts,
        n_questions: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingRow {
    Question {
        question_id: String,
        qtype: String,
        predicted: String,
        top_answer: String,
        /// `x / ‖x‖`.
        unit_x: Vec<f64>,
        cos_theta: Vec<f64>,
    },
    Class {
        answer: String,
        /// `W_i / ‖W_i‖`.
        unit_w: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub answers: Vec<String>,
    pub embedding_dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingDump {
    /// CSV with a header; floats at 9 significant digits. Class rows leave the
    /// question columns empty.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["row_type", "id", "qtype", "predicted", "top_answer"]
            .map(String::from)
            .to_vec();
        header.extend((0..self.embedding_dim).map(|k| format!("v{k}")));
        header.extend(self.answers.iter().map(|a| format!("cos_{a}")));
        let csv_err = |e: csv::Error| Error::Config(format!("cannot encode embeddings: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        let num = |v: &f64| format!("{v:.8e}");
        for row in &self.rows {
            let record: Vec<String> = match row {
                EmbeddingRow::Question {
                    question_id,
                    qtype,
                    predicted,
                    top_answer,
                    unit_x,
                    cos_theta,
                } => {
                    let mut r = vec![
                        "question".into(),
                        question_id.clone(),
                        qtype.clone(),
                        predicted.clone(),
                        top_answer.clone(),
                    ];
                    r.extend(unit_x.iter().map(num));
                    r.extend(cos_theta.iter().map(num));
                    r
                }
                EmbeddingRow::Class { answer, unit_w } => {
                    let mut r = vec![
                        "class".into(),
                        answer.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ];
                    r.extend(unit_w.iter().map(num));
                    r.extend(std::iter::repeat_n(String::new(), self.answers.len()));
                    r
                }
            };
            w.write_record(&record).map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::Config(format!("cannot encode embeddings: {e}")))
    }
}

/// Unit feature vectors and cosines per record (in question-id order),
/// followed by one unit weight row per answer.
pub fn build_embeddings(
    model: &ClassifierModel,
    records: &[Record],
    vocab: &AnswerVocab,
    registry: &QTypeRegistry,
) -> Result<EmbeddingDump> {
    if vocab.len() != model.class_count() {
        return Err(Error::Shape(format!(
            "vocabulary has {} answers but the model has {} classes",
            vocab.len(),
            model.class_count()
        )));
    }
    let name = |id: usize| vocab.name(id).unwrap_or_default().to_string();
    let mut rows = Vec::with_capacity(records.len() + vocab.len());
    for r in canonical(records) {
        let x = model.embed(features_of(r)?)?;
        let cos_theta = cosine_logits(&model.weights, &x)?;
        let top = r.top_answer().map(name).unwrap_or_default();
        rows.push(EmbeddingRow::Question {
            question_id: r.question_id.clone(),
            qtype: registry.name(r.qtype).unwrap_or_default().to_string(),
            predicted: name(argmax(&cos_theta)),
            top_answer: top,
            unit_x: l2_normalize(&x)?.into_inner(),
            cos_theta,
        });
    }
    for (i, w) in model.weights.row_iter().enumerate() {
        rows.push(EmbeddingRow::Class {
            answer: name(i),
            unit_w: l2_normalize(w)?.into_inner(),
        });
    }
    Ok(EmbeddingDump {
        answers: vocab.names().to_vec(),
        embedding_dim: model.embedding_dim(),
        rows,
    })
}

pub fn export_embeddings(
    model: &ClassifierModel,
    records: &[Record],
    vocab: &AnswerVocab,
    registry: &QTypeRegistry,
    destination: &Path,
) -> Result<EmbeddingDump> {
    let dump = build_embeddings(model, records, vocab, registry)?;
    atomic_write(destination, &dump.to_csv()?)?;
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, make_shift_config, SyntheticDataset};
    use crate::numerics::{dot, l2_norm, Mat64, Rng, Vec64};
    use crate::trainer::init_model;
    use proptest::prelude::*;

    fn counts(pairs: &[(usize, u32)]) -> BTreeMap<usize, u32> {
        pairs.iter().copied().collect()
    }

    fn small() -> SyntheticDataset {
        let mut cfg = make_shift_config("default").unwrap();
        cfg.n_train = 50;
        cfg.n_test = 120;
        generate(&cfg).unwrap()
    }

    fn categories(data: &SyntheticDataset) -> Vec<Category> {
        data.vocab
            .names()
            .iter()
            .map(|n| Category::of_answer(n))
            .collect()
    }

    #[test]
    fn metric_values() {
        let c = counts(&[(0, 3), (1, 2), (2, 5)]);
        assert_eq!(question_accuracy(0, &c), 1.0);
        assert!((question_accuracy(1, &c) - 0.6667).abs() < 1e-4);
        assert_eq!(question_accuracy(3, &c), 0.0);
        assert_eq!(question_accuracy(2, &c), 1.0);
    }

    #[test]
    fn oracle_model_scores_one() {
        // Head rows equal to the answer evidence block pick each record's
        // unanimous answer on noiseless data.
        let mut cfg = make_shift_config("default").unwrap();
        cfg.evidence_noise_sigma = 0.0;
        cfg.n_train = 10;
        cfg.n_test = 200;
        let data = generate(&cfg).unwrap();
        let (k, n) = (cfg.num_types, cfg.num_answers);
        let mut w = Mat64::zeros(n, k + n);
        for i in 0..n {
            w.set(i, k + i, 1.0);
        }
        let model = ClassifierModel::new(w, None).unwrap();
        for kind in LossKind::ALL {
            let report =
                evaluate_model(&model, &data.test, kind, &categories(&data), &data.registry)
                    .unwrap();
            assert_eq!(report.overall, 1.0);
            assert!(report.per_category.values().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn unanimous_labels_give_top1_accuracy() {
        let data = small();
        let model = init_model(15, 10, None, &mut Rng::new(3)).unwrap();
        let report = evaluate_model(
            &model,
            &data.test,
            LossKind::Nsl,
            &categories(&data),
            &data.registry,
        )
        .unwrap();
        let hits = data
            .test
            .iter()
            .filter(|r| {
                model
                    .predict(r.features.as_deref().unwrap(), LossKind::Nsl)
                    .unwrap()
                    == r.top_answer().unwrap()
            })
            .count();
        assert!((report.overall - hits as f64 / data.test.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn categories_recompose_overall() {
        let data = small();
        let model = init_model(15, 10, Some(6), &mut Rng::new(4)).unwrap();
        let r = evaluate_model(
            &model,
            &data.test,
            LossKind::Ce,
            &categories(&data),
            &data.registry,
        )
        .unwrap();
        let weighted: f64 = r
            .per_category
            .iter()
            .map(|(k, v)| v * r.category_counts[k] as f64)
            .sum::<f64>();
        assert!((weighted / r.n_questions as f64 - r.overall).abs() < 1e-12);
        let weighted: f64 = r
            .per_qtype
            .iter()
            .map(|(k, v)| v * r.qtype_counts[k] as f64)
            .sum::<f64>();
        assert!((weighted / r.n_questions as f64 - r.overall).abs() < 1e-12);
        let text = r.render();
        assert!(text.starts_with("Y/N\tNum.\tOther\tAll\n"));
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let data = small();
        let model = init_model(15, 10, None, &mut Rng::new(5)).unwrap();
        let cats = categories(&data);
        let a =
            evaluate_model(&model, &data.test, LossKind::Adavqa, &cats, &data.registry).unwrap();
        let mut shuffled = data.test.clone();
        Rng::new(1).shuffle(&mut shuffled);
        let b = evaluate_model(&model, &shuffled, LossKind::Adavqa, &cats, &data.registry).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_errors() {
        let data = small();
        let model = init_model(7, 10, None, &mut Rng::new(5)).unwrap();
        assert!(matches!(
            evaluate_model(
                &model,
                &data.test,
                LossKind::Ce,
                &categories(&data),
                &data.registry
            ),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            mean_question_accuracy(&model, &data.test, LossKind::Ce),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn embedding_dump_contract() {
        let data = small();
        let model = init_model(15, 10, Some(8), &mut Rng::new(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let dump =
            export_embeddings(&model, &data.test, &data.vocab, &data.registry, &path).unwrap();
        assert_eq!(dump.rows.len(), data.test.len() + 10);
        let units: Vec<&Vec<f64>> = dump
            .rows
            .iter()
            .filter_map(|r| match r {
                EmbeddingRow::Class { unit_w, .. } => Some(unit_w),
                _ => None,
            })
            .collect();
        for row in &dump.rows {
            match row {
                EmbeddingRow::Question {
                    unit_x, cos_theta, ..
                } => {
                    assert!((l2_norm(unit_x) - 1.0).abs() < 1e-9);
                    for (i, w) in units.iter().enumerate() {
                        assert!((dot(unit_x, w) - cos_theta[i]).abs() < 1e-9);
                    }
                }
                EmbeddingRow::Class { unit_w, .. } => assert!((l2_norm(unit_w) - 1.0).abs() < 1e-9),
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + data.test.len() + 10);
        assert!(lines[0].starts_with("row_type,id,qtype,predicted,top_answer,v0,"));
        assert_eq!(lines[1].split(',').count(), lines[0].split(',').count());
        assert!(lines[1].starts_with("question,test-000000,"));
        assert!(lines.last().unwrap().starts_with("class,"));
    }

    proptest! {
        #[test]
        fn accuracy_monotone_and_clamped(a in 0u32..=10, b in 0u32..=10) {
            let (lo, hi) = (a.min(b), a.max(b));
            let x = question_accuracy(0, &counts(&[(0, lo)]));
            let y = question_accuracy(0, &counts(&[(0, hi)]));
            prop_assert!(x <= y);
            prop_assert!((0.0..=1.0).contains(&y));
        }

        #[test]
        fn argmax_ignores_positive_rescaling(
            seed in any::<u64>(),
            sx in 1e-3f64..1e3,
            sw in proptest::collection::vec(1e-3f64..1e3, 6),
        ) {
            let mut rng = Rng::new(seed);
            let model = init_model(9, 6, None, &mut rng).unwrap();
            let x: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
            let mut scaled = model.clone();
            for (i, s) in sw.iter().enumerate() {
                scaled.weights.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
            let xs: Vec<f64> = x.iter().map(|v| v * sx).collect();
            for kind in [LossKind::Nsl, LossKind::Lmc, LossKind::Adavqa] {
                prop_assert_eq!(model.predict(&x, kind).unwrap(), scaled.predict(&xs, kind).unwrap());
            }
            let _ = Vec64::new(x).unwrap();
        }
    }
}
