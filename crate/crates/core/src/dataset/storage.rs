//! Line-delimited record files plus a JSON manifest.
//!
//! ```text
//! <dir>/manifest.json   format version, ShiftConfig, answers, categories, qtypes
//! <dir>/train.jsonl     {"question_id","qtype","answer_counts","features"} per line
//! <dir>/test.jsonl
//! ```
//!
//! In record lines `qtype` and the `answer_counts` keys are names, resolved
//! through the manifest on read.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnswerVocab, Category, Interner, QTypeRegistry, Record, ShiftConfig};
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_json, write_json};
use crate::numerics::Vec64;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub shift_config: Option<ShiftConfig>,
    pub answers: Vec<String>,
    pub answer_categories: Vec<Category>,
    pub qtypes: Vec<String>,
    pub feature_dim: usize,
    pub train_file: String,
    pub test_file: String,
}

#[derive(Debug, Clone)]
pub struct StoredDataset {
    pub manifest: DatasetManifest,
    pub vocab: AnswerVocab,
    pub registry: QTypeRegistry,
    pub train: Vec<Record>,
    pub test: Vec<Record>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    question_id: String,
    qtype: String,
    answer_counts: BTreeMap<String, u32>,
    features: Option<Vec<f64>>,
}

fn encode(records: &[Record], vocab: &AnswerVocab, registry: &QTypeRegistry) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let qtype = registry
            .name(r.qtype)
            .ok_or_else(|| Error::Index(format!("qtype {} of {}", r.qtype, r.question_id)))?;
        let mut answer_counts = BTreeMap::new();
        for (&a, &c) in &r.answer_counts {
            let name = vocab
                .name(a)
                .ok_or_else(|| Error::Index(format!("answer {a} of {}", r.question_id)))?;
            answer_counts.insert(name.to_string(), c);
        }
        let line = RecordLine {
            question_id: r.question_id.clone(),
            qtype: qtype.to_string(),
            answer_counts,
            features: r.features.as_ref().map(|f| f.to_vec()),
        };
        out.push_str(&serde_json::to_string(&line).expect("record lines always serialize"));
        out.push('\n');
    }
    Ok(out)
}

fn decode(
    text: &str,
    file: &str,
    vocab: &AnswerVocab,
    registry: &QTypeRegistry,
    feature_dim: usize,
) -> Result<Vec<Record>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: file.to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: RecordLine =
            serde_json::from_str(raw).map_err(|e| parse_err(line_no, e.to_string()))?;
        let qtype = registry
            .id(&line.qtype)
            .ok_or_else(|| parse_err(line_no, format!("unknown qtype `{}`", line.qtype)))?;
        let mut answer_counts = BTreeMap::new();
        for (name, c) in line.answer_counts {
            let id = vocab
                .id(&name)
                .ok_or_else(|| parse_err(line_no, format!("unknown answer `{name}`")))?;
            answer_counts.insert(id, c);
        }
        let features = match line.features {
            Some(f) => {
                if f.len() != feature_dim {
                    return Err(parse_err(
                        line_no,
                        format!(
                            "feature length {} != manifest feature_dim {feature_dim}",
                            f.len()
                        ),
                    ));
                }
                Some(Vec64::new(f).map_err(|e| parse_err(line_no, e.to_string()))?)
            }
            None => None,
        };
        records.push(Record {
            question_id: line.question_id,
            qtype,
            answer_counts,
            features,
        });
    }
    Ok(records)
}

pub fn write_dataset(dir: &Path, data: &StoredDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &data.manifest;
    atomic_write(
        &dir.join(&m.train_file),
        encode(&data.train, &data.vocab, &data.registry)?.as_bytes(),
    )?;
    atomic_write(
        &dir.join(&m.test_file),
        encode(&data.test, &data.vocab, &data.registry)?.as_bytes(),
    )?;
    write_json(&dir.join(MANIFEST_FILE), m)
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported dataset format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.answer_categories.len() != manifest.answers.len() {
        return Err(Error::Config(
            "manifest categories do not match answers".into(),
        ));
    }
    let vocab = Interner::from_names(manifest.answers.clone())?;
    let registry = Interner::from_names(manifest.qtypes.clone())?;
    let read = |file: &str| -> Result<Vec<Record>> {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        decode(&text, file, &vocab, &registry, manifest.feature_dim)
    };
    let train = read(&manifest.train_file)?;
    let test = read(&manifest.test_file)?;
    Ok(StoredDataset {
        manifest,
        vocab,
        registry,
        train,
        test,
    })
}

impl StoredDataset {
    pub fn from_synthetic(data: super::SyntheticDataset) -> Self {
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            answers: data.vocab.names().to_vec(),
            answer_categories: data
                .vocab
                .names()
                .iter()
                .map(|a| Category::of_answer(a))
                .collect(),
            qtypes: data.registry.names().to_vec(),
            feature_dim: data.config.feature_dim(),
            shift_config: Some(data.config),
            train_file: "train.jsonl".into(),
            test_file: "test.jsonl".into(),
        };
        StoredDataset {
            manifest,
            vocab: data.vocab,
            registry: data.registry,
            train: data.train,
            test: data.test,
        }
    }

    pub fn categories(&self) -> &[Category] {
        &self.manifest.answer_categories
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, make_shift_config};

    #[test]
    fn round_trip_is_exact() {
        let mut cfg = make_shift_config("default").unwrap();
        cfg.n_train = 40;
        cfg.n_test = 20;
        let stored = StoredDataset::from_synthetic(generate(&cfg).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &stored).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.train, stored.train);
        assert_eq!(back.test, stored.test);
        assert_eq!(back.manifest, stored.manifest);
        assert!(back.categories().contains(&Category::YesNo));
        assert!(back.categories().contains(&Category::Number));
        assert!(back.categories().contains(&Category::Other));
    }

    #[test]
    fn bad_line_reports_line_number() {
        let mut cfg = make_shift_config("default").unwrap();
        cfg.n_train = 3;
        cfg.n_test = 3;
        let stored = StoredDataset::from_synthetic(generate(&cfg).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &stored).unwrap();
        let path = dir.path().join("test.jsonl");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"question_id\": \"x\", \"qtype\": \"nope\", \"answer_counts\": {}, \"features\": null}\n");
        fs::write(&path, text).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("nope"), "{err}");
    }
}
