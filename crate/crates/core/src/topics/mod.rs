//! TF-IDF vectorization and NMF topic modeling.

mod matrix;
mod nmf;
mod tfidf;

use std::cmp::Ordering;

use thiserror::Error;

use crate::Scalar;

pub use matrix::DenseMatrix;
pub use nmf::{frobenius_error, load_nmf, nmf_fit, save_nmf, NmfConfig, NmfModel, NMF_MAGIC};
pub use tfidf::{build_tfidf, build_vocabulary, TfidfMatrix, Vocabulary};

/// Default vocabulary cap.
pub const DEFAULT_VOCAB_CAP: usize = 2000;
/// Default number of keywords surfaced per topic.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("topic count {topics} must be in 1..=min({docs}, {terms})")]
    TopicCount { topics: usize, docs: usize, terms: usize },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("duplicate vocabulary term {0:?}")]
    DuplicateTerm(String),
    #[error("dominance threshold {0} outside (0, 1]")]
    Dominance(f64),
    #[error("not an NMF model file")]
    BadMagic,
    #[error("truncated NMF model file")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Top-`k` terms of every topic row of `H`, weights divided by the row max.
/// Ties go to the lexicographically smaller term; zero entries are skipped.
pub fn topic_keywords<T: Scalar>(h: &DenseMatrix<T>, vocab: &Vocabulary, k: usize) -> Vec<Vec<(String, T)>> {
    (0..h.rows())
        .map(|i| {
            let row = h.row(i);
            let mut cols: Vec<usize> = (0..row.len()).filter(|&j| row[j] > T::zero()).collect();
            cols.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| vocab.term(a).cmp(vocab.term(b)))
            });
            cols.truncate(k);
            let max = cols.first().map_or(T::one(), |&j| row[j]);
            cols.into_iter().map(|j| (vocab.term(j).to_string(), row[j] / max)).collect()
        })
        .collect()
}

/// Soft topic memberships per document.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicAssignment<T> {
    /// `(topic, weight)` pairs per document, ascending by topic.
    pub memberships: Vec<Vec<(usize, T)>>,
    /// Documents whose `W` row is all zero.
    pub skipped: Vec<usize>,
}

/// Every document joins its argmax topic plus each topic with
/// `W[d,i] ≥ τ·max_j W[d,j]`; weights are `W[d,i] / max_j W[d,j]`.
pub fn assign_topics<T: Scalar>(w: &DenseMatrix<T>, dominance: T) -> Result<TopicAssignment<T>, TopicsError> {
    if !(dominance > T::zero() && dominance <= T::one()) {
        return Err(TopicsError::Dominance(dominance.to_f64_lossless()));
    }
    let mut out = TopicAssignment { memberships: Vec::with_capacity(w.rows()), skipped: Vec::new() };
    for d in 0..w.rows() {
        let row = w.row(d);
        let max = row.iter().copied().fold(T::zero(), T::max);
        if max <= T::zero() {
            out.memberships.push(Vec::new());
            out.skipped.push(d);
            continue;
        }
        let threshold = dominance * max;
        out.memberships.push(
            row.iter()
                .enumerate()
                .filter(|&(_, &v)| v >= threshold || v == max)
                .map(|(i, &v)| (i, v / max))
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(terms: &[&str]) -> Vocabulary {
        Vocabulary::from_terms(terms.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn keywords_normalized_by_row_max() {
        let h = DenseMatrix::from_rows(&[vec![0.0, 5.0, 10.0]]);
        let kw = topic_keywords(&h, &vocab(&["t0", "t1", "t2"]), 2);
        assert_eq!(kw[0], vec![("t2".to_string(), 1.0), ("t1".to_string(), 0.5)]);
    }

    #[test]
    fn keyword_ties_are_lexicographic() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]);
        let kw = topic_keywords(&h, &vocab(&["pfizer", "dose", "vaccine"]), 1);
        assert_eq!(kw[0], vec![("dose".to_string(), 1.0)]);
    }

    fn memberships(row: Vec<f64>, tau: f64) -> Vec<(usize, f64)> {
        let w = DenseMatrix::from_rows(&[row]);
        assign_topics(&w, tau).unwrap().memberships.remove(0)
    }

    #[test]
    fn assignment_examples() {
        assert_eq!(memberships(vec![0.9, 0.1], 0.5), [(0, 1.0)]);
        assert_eq!(memberships(vec![0.6, 0.6], 0.5), [(0, 1.0), (1, 1.0)]);
        assert_eq!(memberships(vec![0.8, 0.5, 0.1], 0.5), [(0, 1.0), (1, 0.625)]);
    }

    #[test]
    fn zero_rows_are_skipped() {
        let w = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.2, 0.1]]);
        let a = assign_topics(&w, 0.5).unwrap();
        assert_eq!(a.skipped, [0]);
        assert!(a.memberships[0].is_empty());
        assert!(assign_topics(&w, 0.0).is_err());
        assert!(assign_topics(&w, 1.5).is_err());
    }

    #[test]
    fn weights_in_unit_interval_with_argmax_one() {
        let w = DenseMatrix::from_rows(&[vec![0.3, 0.7, 0.69, 0.01], vec![1e-9, 0.0, 2e-9, 0.0]]);
        let a = assign_topics(&w, 0.1).unwrap();
        for m in &a.memberships {
            assert!(m.iter().all(|&(_, v)| v > 0.0 && v <= 1.0));
            assert!(m.iter().any(|&(_, v)| v == 1.0));
        }
    }
}
