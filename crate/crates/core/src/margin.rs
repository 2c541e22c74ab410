//! Adapted margins, question-type entropies and scale-factor bounds.
//!
//! For question type `k` with answer counts `n_i^k`:
//!
//! ```text
//! m̄_i = (n_i^k + ε) / (Σ_j n_j^k + ε)        m_i = 1 − m̄_i
//! e_k = −Σ_i m̄_i log₂ m̄_i
//! ```
//!
//! Types with no training counts are flagged unseen and never receive
//! margins. Types whose entropy does not exceed the threshold fall back to
//! zero margins, which turns the adapted loss into the plain normalized one.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnswerVocab, CountTable, QTypeRegistry};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Vec64};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 1.0;

pub fn normalized_frequencies(counts: &CountTable, epsilon: f64) -> Result<Vec<Vec<f64>>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok((0..counts.num_types())
        .map(|k| {
            let row = counts.row(k);
            let total = row.iter().sum::<u64>() as f64;
            row.iter()
                .map(|&n| (n as f64 + epsilon) / (total + epsilon))
                .collect()
        })
        .collect())
}

pub fn adapted_margins(freq: &[Vec<f64>]) -> Vec<Vec<f64>> {
    freq.iter()
        .map(|row| row.iter().map(|f| 1.0 - f).collect())
        .collect()
}

/// Shannon entropy in bits with `0·log 0 = 0`.
pub fn type_entropy(freq_row: &[f64]) -> f64 {
    let h: f64 = freq_row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    // -0.0 for a single certain answer
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub epsilon: f64,
    /// `m̄`, indexed `[qtype][answer]`.
    pub freq: Vec<Vec<f64>>,
    /// `m = 1 − m̄`.
    pub margin: Vec<Vec<f64>>,
    /// Entropy per question type, in bits.
    pub entropy: Vec<f64>,
    /// Types without any training counts.
    pub unseen: Vec<bool>,
}

impl MarginTable {
    pub fn from_counts(counts: &CountTable, epsilon: f64) -> Result<Self> {
        let freq = normalized_frequencies(counts, epsilon)?;
        let margin = adapted_margins(&freq);
        let entropy = freq.iter().map(|r| type_entropy(r)).collect();
        let unseen = (0..counts.num_types())
            .map(|k| counts.row(k).iter().all(|&n| n == 0))
            .collect();
        Ok(MarginTable {
            epsilon,
            freq,
            margin,
            entropy,
            unseen,
        })
    }

    pub fn num_types(&self) -> usize {
        self.freq.len()
    }

    pub fn num_answers(&self) -> usize {
        self.freq.first().map_or(0, Vec::len)
    }

    /// Margins applied to a question of type `qtype`: the adapted row when the
    /// type was seen and its entropy exceeds `threshold`, zeros otherwise.
    pub fn effective_margins(&self, qtype: usize, threshold: f64) -> Result<Vec64> {
        if qtype >= self.num_types() {
            return Err(Error::Index(format!(
                "question type {qtype} out of range for {} types",
                self.num_types()
            )));
        }
        if !self.unseen[qtype] && self.entropy[qtype] > threshold {
            Vec64::new(self.margin[qtype].clone())
        } else {
            Ok(Vec64::zeros(self.num_answers()))
        }
    }

    /// Per-type summary with the five most frequent answers.
    pub fn render_report(&self, vocab: &AnswerVocab, registry: &QTypeRegistry) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# epsilon = {:e}", self.epsilon);
        let _ = writeln!(
            out,
            "qtype\tentropy_bits\tunseen\trank\tanswer\tfreq\tmargin"
        );
        for k in 0..self.num_types() {
            let qt = registry.name(k).unwrap_or("?");
            let mut order: Vec<usize> = (0..self.num_answers()).collect();
            order.sort_by(|&a, &b| self.freq[k][b].total_cmp(&self.freq[k][a]).then(a.cmp(&b)));
            for (rank, &a) in order.iter().take(5).enumerate() {
                let _ = writeln!(
                    out,
                    "{qt}\t{:.6}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                    self.entropy[k],
                    self.unseen[k],
                    rank + 1,
                    vocab.name(a).unwrap_or("?"),
                    self.freq[k][a],
                    self.margin[k][a]
                );
            }
        }
        out
    }
}

/// Target class, per-class margins and the desired target probability `P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub target: usize,
    pub margins: Vec<f64>,
    pub probability: f64,
}

impl BoundQuery {
    pub fn new(target: usize, margins: Vec<f64>, probability: f64) -> Result<Self> {
        if margins.len() < 2 {
            return Err(Error::Domain(
                "scale bounds need at least two classes".into(),
            ));
        }
        if target >= margins.len() {
            return Err(Error::Index(format!(
                "target {target} with {} classes",
                margins.len()
            )));
        }
        if margins.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::Domain("margins must lie in [0, 1]".into()));
        }
        if !(probability > 0.0 && probability < 1.0) {
            return Err(Error::Domain(format!(
                "probability must lie in (0, 1), got {probability}"
            )));
        }
        Ok(BoundQuery {
            target,
            margins,
            probability,
        })
    }

    fn others_mean(&self) -> f64 {
        let n = self.margins.len();
        let sum: f64 = (0..n)
            .filter(|&j| j != self.target)
            .map(|j| self.margins[j])
            .sum();
        sum / (n - 1) as f64
    }
}

/// Closed-form scale bound `−ln(1/P − 1) / (2 − m_i − Σ_{j≠i} m_j / (|Ω| − 1))`.
/// It can be far above the smallest scale that reaches `P`
/// (compare [`scale_bound_exact`]).
pub fn scale_bound_closed_form(q: &BoundQuery) -> Result<f64> {
    let denom = 2.0 - q.margins[q.target] - q.others_mean();
    if denom == 0.0 {
        return Err(Error::Domain("scale bound denominator is zero".into()));
    }
    Ok(-(1.0 / q.probability - 1.0).ln() / denom)
}

/// Target-class probability when the target has `cos θ = 1` and every other
/// class `cos θ = −1`, with logits `s(cos θ_j − m_j)`.
pub fn ideal_config_probability(q: &BoundQuery, scale: f64) -> f64 {
    let logits: Vec<f64> = q
        .margins
        .iter()
        .enumerate()
        .map(|(j, m)| {
            if j == q.target {
                scale * (1.0 - m)
            } else {
                scale * (-1.0 - m)
            }
        })
        .collect();
    (logits[q.target] - log_sum_exp(&logits)).exp()
}

/// Smallest `s` with `ideal_config_probability(s) ≥ P`, by bisection.
///
/// The probability is strictly increasing in `s` for margins in `[0, 1]`
/// because every non-target gap `s(m_i − m_j − 2)` decreases with `s`. The
/// result may be negative when `P < 1/|Ω|`.
pub fn scale_bound_exact(q: &BoundQuery) -> Result<f64> {
    let target = q.probability;
    let prob = |s: f64| ideal_config_probability(q, s);
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while prob(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Domain(format!(
                "no finite scale reaches probability {target}"
            )));
        }
    }
    while prob(lo) >= target {
        hi = lo;
        lo *= 2.0;
        if lo < -1e9 {
            return Err(Error::Domain(format!(
                "no finite scale bracket for probability {target}"
            )));
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if prob(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: Vec<Vec<u64>>) -> MarginTable {
        MarginTable::from_counts(&CountTable::from_rows(rows).unwrap(), DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn frequency_and_margin_values() {
        let t = table(vec![vec![7, 2, 1]]);
        for (got, want) in t.freq[0].iter().zip([0.7, 0.2, 0.1]) {
            assert!((got - want).abs() < 1e-6);
        }
        for (got, want) in t.margin[0].iter().zip([0.3, 0.8, 0.9]) {
            assert!((got - want).abs() < 1e-6);
        }
        let single = table(vec![vec![5]]);
        assert!((single.freq[0][0] - 1.0).abs() < 1e-12);
        assert_eq!(
            adapted_margins(&[vec![0.7, 0.1, 1.0]])[0],
            vec![1.0 - 0.7, 1.0 - 0.1, 0.0]
        );
    }

    #[test]
    fn all_zero_row_is_degenerate_and_unseen() {
        let t = table(vec![vec![0, 0, 0], vec![1, 1, 0]]);
        assert_eq!(t.freq[0], vec![1.0, 1.0, 1.0]);
        assert!(t.unseen[0] && !t.unseen[1]);
        assert_eq!(t.effective_margins(0, 0.0).unwrap().as_slice(), &[0.0; 3]);
    }

    #[test]
    fn row_sum_matches_closed_form() {
        // Σ m̄ = (N + |Ω|ε)/(N + ε): within (|Ω|−1)ε/N of one, not exactly one.
        let t = table(vec![vec![7, 2, 1]]);
        let sum: f64 = t.freq[0].iter().sum();
        let expected = (10.0 + 3.0 * DEFAULT_EPSILON) / (10.0 + DEFAULT_EPSILON);
        assert!((sum - expected).abs() < 1e-15);
        assert!((sum - 1.0).abs() <= 2.0 * DEFAULT_EPSILON / 10.0);
    }

    #[test]
    fn entropy_values_are_exact() {
        assert_eq!(type_entropy(&[0.5, 0.5]), 1.0);
        assert_eq!(type_entropy(&[1.0]), 0.0);
        assert_eq!(type_entropy(&[0.25; 4]), 2.0);
        assert_eq!(type_entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn threshold_selection() {
        let mut t = table(vec![vec![7, 2, 1]]);
        t.entropy[0] = 0.3;
        assert_eq!(t.effective_margins(0, 0.5).unwrap().as_slice(), &[0.0; 3]);
        t.entropy[0] = 2.0;
        assert_eq!(
            t.effective_margins(0, 0.5).unwrap().as_slice(),
            t.margin[0].as_slice()
        );
        assert_eq!(
            t.effective_margins(0, 0.0).unwrap().as_slice(),
            t.margin[0].as_slice()
        );
        assert!(t.effective_margins(1, 0.0).is_err());
    }

    #[test]
    fn closed_form_bound_values() {
        let q = BoundQuery::new(0, vec![0.5, 0.5], 0.99).unwrap();
        assert!((scale_bound_closed_form(&q).unwrap() - 99f64.ln()).abs() < 1e-12);
        assert!((scale_bound_closed_form(&q).unwrap() - 4.59512).abs() < 1e-5);
        let q = BoundQuery::new(0, vec![0.5, 0.5], 0.5).unwrap();
        assert_eq!(scale_bound_closed_form(&q).unwrap(), 0.0);
        let q = BoundQuery::new(0, vec![0.9, 0.1], 0.9).unwrap();
        assert!((scale_bound_closed_form(&q).unwrap() - 2.19722).abs() < 1e-5);
        let q = BoundQuery::new(0, vec![1.0, 1.0], 0.9).unwrap();
        assert!(matches!(scale_bound_closed_form(&q), Err(Error::Domain(_))));
    }

    #[test]
    fn query_validation() {
        assert!(BoundQuery::new(0, vec![0.5], 0.9).is_err());
        assert!(BoundQuery::new(2, vec![0.5, 0.5], 0.9).is_err());
        assert!(BoundQuery::new(0, vec![0.5, 1.5], 0.9).is_err());
        assert!(BoundQuery::new(0, vec![0.5, 0.5], 1.0).is_err());
        assert!(BoundQuery::new(0, vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn ideal_probability_values() {
        let q = BoundQuery::new(1, vec![0.3, 0.9, 0.1, 0.6], 0.9).unwrap();
        assert!((ideal_config_probability(&q, 0.0) - 0.25).abs() < 1e-15);
        let q = BoundQuery::new(0, vec![0.5, 0.5], 0.99).unwrap();
        let s = 99f64.ln() / 2.0;
        assert!((ideal_config_probability(&q, s) - 0.99).abs() < 1e-9);
        // closed form 1/(1+exp(-2s))
        for s in [0.1f64, 1.0, 3.0] {
            let closed = 1.0 / (1.0 + (-2.0 * s).exp());
            assert!((ideal_config_probability(&q, s) - closed).abs() < 1e-15);
        }
        assert!(ideal_config_probability(&q, 1e4) > 1.0 - 1e-12);
    }

    #[test]
    fn exact_bound_values() {
        let q = BoundQuery::new(0, vec![0.5, 0.5], 0.99).unwrap();
        let s = scale_bound_exact(&q).unwrap();
        assert!((s - 2.29756).abs() < 1e-5);
        assert!((s - 99f64.ln() / 2.0).abs() < 1e-9);
        let q = BoundQuery::new(1, vec![0.2, 0.2], 0.5).unwrap();
        let s = scale_bound_exact(&q).unwrap();
        assert!((ideal_config_probability(&q, s) - 0.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn margins_order_opposite_to_counts(row in prop::collection::vec(0u64..1000, 2..12)) {
            prop_assume!(row.iter().any(|&n| n > 0));
            let t = table(vec![row.clone()]);
            for i in 0..row.len() {
                for j in 0..row.len() {
                    if row[i] > row[j] {
                        prop_assert!(t.margin[0][i] < t.margin[0][j]);
                    }
                }
                prop_assert!((0.0..=1.0).contains(&t.freq[0][i]));
            }
            prop_assert!(t.entropy[0] >= 0.0);
        }

        #[test]
        fn entropy_extremes(n in 2usize..64, hot in 0usize..64) {
            let uniform = vec![1.0 / n as f64; n];
            prop_assert!((type_entropy(&uniform) - (n as f64).log2()).abs() < 1e-12);
            let mut skewed = uniform.clone();
            skewed[0] += 0.5 / n as f64;
            skewed[1] -= 0.5 / n as f64;
            prop_assert!(type_entropy(&skewed) < (n as f64).log2());
            let mut point = vec![0.0; n];
            point[hot % n] = 1.0;
            prop_assert_eq!(type_entropy(&point), 0.0);
        }

        #[test]
        fn exact_bound_contract(
            margins in prop::collection::vec(0.0f64..=1.0, 2..10),
            target in 0usize..10,
            p in 0.01f64..0.999,
        ) {
            let q = BoundQuery::new(target % margins.len(), margins, p).unwrap();
            let s = scale_bound_exact(&q).unwrap();
            prop_assert!(ideal_config_probability(&q, s) >= p);
            prop_assert!(ideal_config_probability(&q, s - 1e-6) < p);
            prop_assert!((ideal_config_probability(&q, s) - p).abs() < 1e-9);
        }

        #[test]
        fn ideal_probability_strictly_increasing(
            margins in prop::collection::vec(0.0f64..=1.0, 2..10),
            target in 0usize..10,
        ) {
            let q = BoundQuery::new(target % margins.len(), margins, 0.5).unwrap();
            let grid: Vec<f64> = (0..100).map(|i| -2.0 + 0.1 * i as f64).collect();
            for w in grid.windows(2) {
                prop_assert!(ideal_config_probability(&q, w[1]) > ideal_config_probability(&q, w[0]));
            }
        }

        #[test]
        fn two_class_equal_margins_closed_form(m in 0.0f64..=1.0, p in 0.01f64..0.999) {
            let q = BoundQuery::new(0, vec![m, m], p).unwrap();
            let expected = (p / (1.0 - p)).ln() / 2.0;
            prop_assert!((scale_bound_exact(&q).unwrap() - expected).abs() < 1e-6);
        }
    }
}
