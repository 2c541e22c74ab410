//! Ingestion of the public VQA-CP question/annotation layout.
//!
//! Only `question_id` is read from the questions array; annotations provide
//! `question_id`, `question_type` and `answers[].answer`. Unknown fields are
//! ignored.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::Deserialize;

use super::{AnswerVocab, Interner, QTypeRegistry, Record, ANNOTATORS_PER_QUESTION};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(untagged)]
enum QuestionId {
    Int(u64),
    Text(String),
}

impl QuestionId {
    fn into_string(self) -> String {
        match self {
            QuestionId::Int(v) => v.to_string(),
            QuestionId::Text(s) => s,
        }
    }
}

#[derive(Deserialize)]
struct QuestionEntry {
    question_id: QuestionId,
}

#[derive(Deserialize)]
struct AnswerEntry {
    answer: String,
}

#[derive(Deserialize)]
struct AnnotationEntry {
    question_id: QuestionId,
    question_type: String,
    answers: Vec<AnswerEntry>,
}

#[derive(Debug, Clone)]
pub struct LoadedAnnotations {
    pub vocab: AnswerVocab,
    pub registry: QTypeRegistry,
    pub records: Vec<Record>,
}

fn parse_array<T: for<'de> Deserialize<'de>>(mut src: impl Read, name: &str) -> Result<Vec<T>> {
    let mut text = String::new();
    src.read_to_string(&mut text).map_err(|e| Error::Parse {
        source_name: name.to_string(),
        message: format!("cannot read as UTF-8 text: {e}"),
    })?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: name.to_string(),
        message: e.to_string(),
    })
}

/// Reads both files and tallies annotator answers per question.
///
/// Records follow the order of the questions file. Answer and question-type
/// ids are assigned in first-encounter order along that same traversal.
pub fn load_vqacp_annotations(
    questions: impl Read,
    annotations: impl Read,
) -> Result<LoadedAnnotations> {
    let questions: Vec<QuestionEntry> = parse_array(questions, "questions")?;
    let annotations: Vec<AnnotationEntry> = parse_array(annotations, "annotations")?;

    let mut by_id: HashMap<String, AnnotationEntry> = HashMap::with_capacity(annotations.len());
    for (pos, ann) in annotations.into_iter().enumerate() {
        let id = match &ann.question_id {
            QuestionId::Int(v) => v.to_string(),
            QuestionId::Text(s) => s.clone(),
        };
        if ann.answers.len() > ANNOTATORS_PER_QUESTION as usize {
            return Err(Error::Parse {
                source_name: "annotations".into(),
                message: format!(
                    "entry {pos} (question {id}): {} answers, at most {ANNOTATORS_PER_QUESTION} allowed",
                    ann.answers.len()
                ),
            });
        }
        if by_id.insert(id.clone(), ann).is_some() {
            return Err(Error::Referential(format!(
                "question {id} is annotated more than once"
            )));
        }
    }

    let mut vocab = Interner::default();
    let mut registry = Interner::default();
    let mut records = Vec::with_capacity(questions.len());
    for q in questions {
        let id = q.question_id.into_string();
        let ann = by_id
            .remove(&id)
            .ok_or_else(|| Error::Referential(format!("question {id} has no annotation")))?;
        let qtype = registry.intern(&ann.question_type);
        let mut answer_counts = BTreeMap::new();
        for a in &ann.answers {
            *answer_counts.entry(vocab.intern(&a.answer)).or_insert(0) += 1;
        }
        records.push(Record {
            question_id: id,
            qtype,
            answer_counts,
            features: None,
        });
    }
    if let Some(orphan) = by_id.keys().min() {
        return Err(Error::Referential(format!(
            "annotation for question {orphan} has no matching question ({} orphaned)",
            by_id.len()
        )));
    }
    Ok(LoadedAnnotations {
        vocab,
        registry,
        records,
    })
}

/// Drops answers with fewer than `min_count` total annotator votes, remapping
/// ids so the surviving vocabulary keeps its relative order.
pub fn prune_vocab(loaded: LoadedAnnotations, min_count: u64) -> LoadedAnnotations {
    if min_count <= 1 {
        return loaded;
    }
    let mut totals = vec![0u64; loaded.vocab.len()];
    for r in &loaded.records {
        for (&a, &c) in &r.answer_counts {
            totals[a] += u64::from(c);
        }
    }
    let mut remap = vec![None; totals.len()];
    let mut vocab = Interner::default();
    for (old, name) in loaded.vocab.names().iter().enumerate() {
        if totals[old] >= min_count {
            remap[old] = Some(vocab.intern(name));
        }
    }
    let records = loaded
        .records
        .into_iter()
        .map(|r| Record {
            answer_counts: r
                .answer_counts
                .iter()
                .filter_map(|(&a, &c)| remap[a].map(|n| (n, c)))
                .collect(),
            ..r
        })
        .collect();
    LoadedAnnotations {
        vocab,
        registry: loaded.registry,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answers(list: &[&str]) -> String {
        let items: Vec<String> = list
            .iter()
            .enumerate()
            .map(|(i, a)| {
                format!(
                    r#"{{"answer": "{a}", "answer_confidence": "yes", "answer_id": {}}}"#,
                    i + 1
                )
            })
            .collect();
        format!("[{}]", items.join(","))
    }

    fn load(q: &str, a: &str) -> Result<LoadedAnnotations> {
        load_vqacp_annotations(q.as_bytes(), a.as_bytes())
    }

    #[test]
    fn unanimous_and_tally() {
        let q = r#"[{"question_id": 1, "image_id": 9, "question": "How many?"},
                   {"question_id": 2, "image_id": 9, "question": "How many dogs?"}]"#;
        let unanimous = answers(&["2"; 10]);
        let mut mixed = vec!["2"; 7];
        mixed.extend(["1", "1", "100"]);
        let a = format!(
            r#"[{{"question_id": 2, "question_type": "how many", "answers": {}, "answer_type": "number"}},
                {{"question_id": 1, "question_type": "how many", "answers": {}}}]"#,
            answers(&mixed),
            unanimous
        );
        let loaded = load(q, &a).unwrap();
        assert_eq!(loaded.records.len(), 2);
        let two = loaded.vocab.id("2").unwrap();
        let one = loaded.vocab.id("1").unwrap();
        let hundred = loaded.vocab.id("100").unwrap();
        assert_eq!(loaded.records[0].question_id, "1");
        assert_eq!(loaded.records[0].answer_counts, BTreeMap::from([(two, 10)]));
        assert_eq!(
            loaded.records[1].answer_counts,
            BTreeMap::from([(two, 7), (one, 2), (hundred, 1)])
        );
        assert_eq!(loaded.registry.names(), &["how many".to_string()]);
    }

    #[test]
    fn empty_inputs() {
        let loaded = load("[]", "[]").unwrap();
        assert!(loaded.records.is_empty() && loaded.vocab.is_empty());
        let loaded = load("", "").unwrap();
        assert!(loaded.records.is_empty());
    }

    #[test]
    fn malformed_input_reports_location() {
        let err = load("[{\"question_id\": 1}", "[]").unwrap_err();
        match err {
            Error::Parse {
                source_name,
                message,
            } => {
                assert_eq!(source_name, "questions");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = load("[]", r#"[{"question_id": 1, "answers": []}]"#).unwrap_err();
        assert!(err.to_string().contains("question_type"), "{err}");
    }

    #[test]
    fn referential_errors() {
        let a = format!(
            r#"[{{"question_id": 1, "question_type": "what", "answers": {}}}]"#,
            answers(&["x"])
        );
        assert!(matches!(
            load(r#"[{"question_id": 2}]"#, &a),
            Err(Error::Referential(_))
        ));
        assert!(matches!(load("[]", &a), Err(Error::Referential(_))));
    }

    #[test]
    fn too_many_annotators() {
        let a = format!(
            r#"[{{"question_id": 1, "question_type": "what", "answers": {}}}]"#,
            answers(&["x"; 11])
        );
        assert!(matches!(
            load(r#"[{"question_id": 1}]"#, &a),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn prune_remaps_ids() {
        let q = r#"[{"question_id": 1}, {"question_id": 2}]"#;
        let mut first = vec!["rare"];
        first.extend(["cat"; 9]);
        let a = format!(
            r#"[{{"question_id": 1, "question_type": "what", "answers": {}}},
                {{"question_id": 2, "question_type": "what", "answers": {}}}]"#,
            answers(&first),
            answers(&["dog"; 10])
        );
        let pruned = prune_vocab(load(q, &a).unwrap(), 5);
        assert_eq!(
            pruned.vocab.names(),
            &["cat".to_string(), "dog".to_string()]
        );
        assert_eq!(pruned.records[0].answer_counts, BTreeMap::from([(0, 9)]));
        assert_eq!(pruned.records[1].answer_counts, BTreeMap::from([(1, 10)]));
    }
}
