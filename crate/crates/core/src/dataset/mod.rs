//! Vocabularies, records, count tables and soft targets.

mod storage;
mod synthetic;
mod vqacp;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vec64;

pub use storage::{read_dataset, write_dataset, DatasetManifest, StoredDataset, MANIFEST_FILE};
pub use synthetic::{
    generate, make_shift_config, reverse_prior, sample_dataset, synthetic_answer_names,
    synthetic_qtype_names, ShiftConfig, Split, SyntheticDataset, PRESETS,
};
pub use vqacp::{load_vqacp_annotations, prune_vocab, LoadedAnnotations};

/// Annotators per question in VQA-style data.
pub const ANNOTATORS_PER_QUESTION: u32 = 10;

/// Answer category used for the Y/N, Num., Other report columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    YesNo,
    Number,
    Other,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::YesNo, Category::Number, Category::Other];

    /// `yes`/`no` → yes/no; a numeric literal → number; anything else → other.
    pub fn of_answer(answer: &str) -> Category {
        let a = answer.trim();
        if a.eq_ignore_ascii_case("yes") || a.eq_ignore_ascii_case("no") {
            return Category::YesNo;
        }
        let digits = a.strip_prefix('-').unwrap_or(a);
        let numeric = digits.chars().any(|c| c.is_ascii_digit())
            && digits
                .chars()
                .all(|c| c.is_ascii_digit() || c == '.' || c == ',')
            && digits.matches('.').count() <= 1;
        if numeric {
            Category::Number
        } else {
            Category::Other
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::YesNo => "yes/no",
            Category::Number => "number",
            Category::Other => "other",
        }
    }
}

/// Ordered set of distinct strings with a reverse index; ids are `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate entry `{n}`")));
            }
        }
        Ok(Interner { names, index })
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// The answer set Ω.
pub type AnswerVocab = Interner;

/// Question types `qt_k`.
pub type QTypeRegistry = Interner;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub question_id: String,
    pub qtype: usize,
    /// answer id → number of annotators who gave it.
    pub answer_counts: BTreeMap<usize, u32>,
    pub features: Option<Vec64>,
}

impl Record {
    /// Most-voted answer; ties go to the lowest id.
    pub fn top_answer(&self) -> Option<usize> {
        let mut best: Option<(usize, u32)> = None;
        for (&a, &c) in &self.answer_counts {
            if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((a, c));
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn count_of(&self, answer: usize) -> u32 {
        self.answer_counts.get(&answer).copied().unwrap_or(0)
    }

    pub fn total_count(&self) -> u32 {
        self.answer_counts.values().sum()
    }
}

/// Orders question ids numerically when both parse as integers, otherwise
/// lexicographically (numeric ids first).
pub fn question_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// `n_i^k`: answer occurrence counts per question type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    num_types: usize,
    num_answers: usize,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn zeros(num_types: usize, num_answers: usize) -> Self {
        CountTable {
            num_types,
            num_answers,
            counts: vec![0; num_types * num_answers],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let num_answers = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_answers) {
            return Err(Error::Shape("count table rows have unequal lengths".into()));
        }
        Ok(CountTable {
            num_types: rows.len(),
            num_answers,
            counts: rows.concat(),
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_answers(&self) -> usize {
        self.num_answers
    }

    pub fn get(&self, qtype: usize, answer: usize) -> u64 {
        self.counts[qtype * self.num_answers + answer]
    }

    pub fn row(&self, qtype: usize) -> &[u64] {
        &self.counts[qtype * self.num_answers..(qtype + 1) * self.num_answers]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn build_count_table(
    records: &[Record],
    vocab: &AnswerVocab,
    registry: &QTypeRegistry,
) -> Result<CountTable> {
    let mut table = CountTable::zeros(registry.len(), vocab.len());
    for r in records {
        if r.qtype >= registry.len() {
            return Err(Error::Index(format!(
                "record {} has question type {} but only {} types exist",
                r.question_id,
                r.qtype,
                registry.len()
            )));
        }
        for (&a, &c) in &r.answer_counts {
            if a >= vocab.len() {
                return Err(Error::Index(format!(
                    "record {} references answer {a} but vocabulary has {} entries",
                    r.question_id,
                    vocab.len()
                )));
            }
            table.counts[r.qtype * table.num_answers + a] += u64::from(c);
        }
    }
    Ok(table)
}

/// Soft score of a single annotator count: `min(1, count/3)`.
pub fn soft_score(count: u32) -> f64 {
    (f64::from(count) / 3.0).min(1.0)
}

/// Multi-label targets `aᵢ = min(1, countᵢ/3)`; not renormalized.
pub fn soft_targets(record: &Record, num_answers: usize) -> Result<Vec64> {
    let mut a = vec![0.0; num_answers.max(1)];
    for (&id, &c) in &record.answer_counts {
        let slot = a.get_mut(id).ok_or_else(|| {
            Error::Index(format!(
                "answer {id} out of range for {num_answers} answers"
            ))
        })?;
        *slot = soft_score(c);
    }
    Vec64::new(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, qtype: usize, counts: &[(usize, u32)]) -> Record {
        Record {
            question_id: id.into(),
            qtype,
            answer_counts: counts.iter().copied().collect(),
            features: None,
        }
    }

    fn vocab(n: usize) -> AnswerVocab {
        Interner::from_names((0..n).map(|i| format!("a{i}")).collect()).unwrap()
    }

    #[test]
    fn count_table_examples() {
        let v = vocab(2);
        let reg = Interner::from_names(vec!["what".into(), "how many".into()]).unwrap();
        let t = build_count_table(
            &[rec("1", 0, &[(0, 3)]), rec("2", 0, &[(0, 1), (1, 2)])],
            &v,
            &reg,
        )
        .unwrap();
        assert_eq!(t.row(0), &[4, 2]);
        assert_eq!(t.row(1), &[0, 0]);
        let t = build_count_table(&[rec("1", 1, &[(0, 10)])], &v, &reg).unwrap();
        assert_eq!(t.row(1), &[10, 0]);
    }

    #[test]
    fn count_table_rejects_bad_ids() {
        let v = vocab(2);
        let reg = Interner::from_names(vec!["x".into()]).unwrap();
        assert!(matches!(
            build_count_table(&[rec("1", 1, &[])], &v, &reg),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            build_count_table(&[rec("1", 0, &[(5, 1)])], &v, &reg),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn soft_target_values() {
        assert_eq!(soft_score(3), 1.0);
        assert!((soft_score(2) - 0.6667).abs() < 1e-4);
        assert_eq!(soft_score(0), 0.0);
        let a = soft_targets(&rec("1", 0, &[(0, 7), (1, 2), (2, 1)]), 4).unwrap();
        assert_eq!(a[0], 1.0);
        assert!((a[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a[3], 0.0);
        assert!(soft_targets(&rec("1", 0, &[(9, 1)]), 4).is_err());
    }

    #[test]
    fn category_rule() {
        assert_eq!(Category::of_answer("yes"), Category::YesNo);
        assert_eq!(Category::of_answer("No"), Category::YesNo);
        assert_eq!(Category::of_answer("2"), Category::Number);
        assert_eq!(Category::of_answer("100"), Category::Number);
        assert_eq!(Category::of_answer("1.5"), Category::Number);
        assert_eq!(Category::of_answer("red"), Category::Other);
        assert_eq!(Category::of_answer("2 dogs"), Category::Other);
        assert_eq!(Category::of_answer(""), Category::Other);
    }

    #[test]
    fn top_answer_breaks_ties_low() {
        assert_eq!(rec("1", 0, &[(3, 4), (1, 4), (2, 1)]).top_answer(), Some(1));
        assert_eq!(rec("1", 0, &[]).top_answer(), None);
    }

    #[test]
    fn question_ids_sort_numerically() {
        let mut ids = vec!["10", "9", "b", "100", "a"];
        ids.sort_by(|a, b| question_id_order(a, b));
        assert_eq!(ids, vec!["9", "10", "100", "a", "b"]);
    }

    #[test]
    fn interner_rejects_duplicates() {
        assert!(Interner::from_names(vec!["a".into(), "a".into()]).is_err());
        let mut i = Interner::default();
        assert_eq!(i.intern("x"), 0);
        assert_eq!(i.intern("y"), 1);
        assert_eq!(i.intern("x"), 0);
        assert_eq!(i.id("y"), Some(1));
    }

    proptest! {
        #[test]
        fn count_table_is_order_invariant(
            raw in prop::collection::vec((0usize..3, prop::collection::vec((0usize..4, 0u32..=10), 0..4)), 0..30),
            seed in any::<u64>(),
        ) {
            let v = vocab(4);
            let reg = Interner::from_names(vec!["p".into(), "q".into(), "r".into()]).unwrap();
            let mut records: Vec<Record> = raw.iter().enumerate()
                .map(|(i, (k, c))| rec(&i.to_string(), *k, c))
                .collect();
            let before = build_count_table(&records, &v, &reg).unwrap();
            crate::numerics::Rng::new(seed).shuffle(&mut records);
            prop_assert_eq!(before, build_count_table(&records, &v, &reg).unwrap());
        }

        #[test]
        fn soft_score_monotone_and_saturating(c in 0u32..=10) {
            prop_assert!(soft_score(c) <= soft_score(c + 1));
            prop_assert!((0.0..=1.0).contains(&soft_score(c)));
            if c >= 3 {
                prop_assert_eq!(soft_score(c), 1.0);
            }
        }
    }
}
