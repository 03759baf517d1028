//! Pretrained word vectors and tweet→keyword similarity links.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::scalar::{dot, norm};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum WordVecError {
    #[error("line {line}: expected dimension {expected}, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-numeric component {value:?}")]
    NotNumeric { line: usize, value: String },
    #[error("unknown token {0:?}")]
    MissingToken(String),
    #[error("zero vector for token {0:?}")]
    ZeroVector(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token → vector table with a single shared dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVectors<T> {
    dim: Option<usize>,
    index: HashMap<String, usize>,
    data: Vec<T>,
}

impl<T: Scalar> WordVectors<T> {
    pub fn new() -> Self {
        WordVectors { dim: None, index: HashMap::new(), data: Vec::new() }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Inserts or replaces a vector; the first insert fixes the dimension.
    pub fn insert(&mut self, token: &str, vector: Vec<T>) -> Result<(), WordVecError> {
        let d = *self.dim.get_or_insert(vector.len());
        if vector.len() != d {
            return Err(WordVecError::Dimension { line: 0, expected: d, found: vector.len() });
        }
        match self.index.get(token) {
            Some(&i) => self.data[i * d..(i + 1) * d].copy_from_slice(&vector),
            None => {
                self.index.insert(token.to_string(), self.index.len());
                self.data.extend(vector);
            }
        }
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        let d = self.dim?;
        self.index.get(token).map(|&i| &self.data[i * d..(i + 1) * d])
    }

    /// Text format: optional `count dim` header, then `token v1 … vd` rows.
    /// Gzip input is detected by its magic bytes.
    pub fn load<R: Read>(input: R) -> Result<Self, WordVecError> {
        let mut buffered = BufReader::new(input);
        let gz = buffered.fill_buf()?.starts_with(&[0x1f, 0x8b]);
        if gz {
            Self::load_text(BufReader::new(GzDecoder::new(buffered)))
        } else {
            Self::load_text(buffered)
        }
    }

    fn load_text<R: BufRead>(input: R) -> Result<Self, WordVecError> {
        let mut vectors = WordVectors::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if lineno == 1
                && rest.len() == 1
                && token.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            let vector = rest
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| WordVecError::NotNumeric { line: lineno, value: v.to_string() })
                })
                .collect::<Result<Vec<T>, _>>()?;
            vectors.insert(token, vector).map_err(|e| match e {
                WordVecError::Dimension { expected, found, .. } => {
                    WordVecError::Dimension { line: lineno, expected, found }
                }
                other => other,
            })?;
        }
        Ok(vectors)
    }

    /// Cosine similarity of two stored tokens.
    pub fn cosine(&self, a: &str, b: &str) -> Result<T, WordVecError> {
        let va = self.get(a).ok_or_else(|| WordVecError::MissingToken(a.into()))?;
        let vb = self.get(b).ok_or_else(|| WordVecError::MissingToken(b.into()))?;
        let (na, nb) = (norm(va), norm(vb));
        if na == T::zero() {
            return Err(WordVecError::ZeroVector(a.into()));
        }
        if nb == T::zero() {
            return Err(WordVecError::ZeroVector(b.into()));
        }
        Ok((dot(va, vb) / (na * nb)).max(-T::one()).min(T::one()))
    }
}

/// The best tweet-token/keyword pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordLink<T> {
    pub keyword: String,
    pub token: String,
    /// Cosine similarity clamped into [0, 1].
    pub weight: T,
}

/// Maximizes cosine similarity over all (token, keyword) pairs that both have
/// nonzero vectors. Identical strings score exactly 1. Ties go to the
/// lexicographically smaller keyword, then token.
pub fn best_keyword_link<T: Scalar, S: AsRef<str>, K: AsRef<str>>(
    tokens: &[S],
    keywords: &[K],
    vectors: &WordVectors<T>,
) -> Option<KeywordLink<T>> {
    let mut best: Option<(T, &str, &str)> = None;
    for k in keywords {
        let k = k.as_ref();
        for t in tokens {
            let t = t.as_ref();
            let sim = if t == k && vectors.get(t).is_some_and(|v| norm(v) > T::zero()) {
                T::one()
            } else {
                match vectors.cosine(t, k) {
                    Ok(s) => s,
                    Err(_) => continue,
                }
            };
            let better = match best {
                None => true,
                Some((bs, bk, bt)) => sim > bs || (sim == bs && (k, t) < (bk, bt)),
            };
            if better {
                best = Some((sim, k, t));
            }
        }
    }
    best.map(|(sim, k, t)| KeywordLink {
        keyword: k.to_string(),
        token: t.to_string(),
        weight: sim.max(T::zero()).min(T::one()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn vecs(rows: &[(&str, &[f64])]) -> WordVectors<f64> {
        let mut v = WordVectors::new();
        for (t, x) in rows {
            v.insert(t, x.to_vec()).unwrap();
        }
        v
    }

    #[test]
    fn load_text_rows() {
        let v: WordVectors<f64> = WordVectors::load("a 1 2 3\nb 4 5 6\n".as_bytes()).unwrap();
        assert_eq!(v.dim(), Some(3));
        assert_eq!(v.get("b"), Some(&[4.0, 5.0, 6.0][..]));
        let h: WordVectors<f32> = WordVectors::load("2 2\na 1 0\nb 0 1\n".as_bytes()).unwrap();
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = WordVectors::<f64>::load("a 1 2 3\nb 1 2 3 4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, WordVecError::Dimension { line: 2, expected: 3, found: 4 }));
        assert!(matches!(
            WordVectors::<f64>::load("a 1 x\n".as_bytes()),
            Err(WordVecError::NotNumeric { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file() {
        let v = WordVectors::<f64>::load("".as_bytes()).unwrap();
        assert!(v.is_empty());
        assert_eq!(v.dim(), None);
    }

    #[test]
    fn gzip_input() {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(b"mask 0.5 0.5\n").unwrap();
        let bytes = enc.finish().unwrap();
        let v = WordVectors::<f64>::load(bytes.as_slice()).unwrap();
        assert_eq!(v.get("mask"), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn cosine_examples() {
        let v = vecs(&[
            ("x", &[3.0, -2.0]),
            ("e1", &[1.0, 0.0]),
            ("e2", &[0.0, 1.0]),
            ("d", &[1.0, 1.0]),
            ("z", &[0.0, 0.0]),
        ]);
        assert!((v.cosine("x", "x").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(v.cosine("e1", "e2").unwrap(), 0.0);
        assert!((v.cosine("d", "e1").unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(v.cosine("e1", "nope"), Err(WordVecError::MissingToken(_))));
        assert!(matches!(v.cosine("z", "e1"), Err(WordVecError::ZeroVector(_))));
    }

    #[test]
    fn exact_match_link() {
        let v = vecs(&[("mask", &[0.3, 0.1]), ("wear", &[0.3, 0.2])]);
        let l = best_keyword_link(&["wear", "mask"], &["mask"], &v).unwrap();
        assert_eq!(l.keyword, "mask");
        assert_eq!(l.weight, 1.0);
    }

    #[test]
    fn no_vectors_no_link() {
        let v = vecs(&[("mask", &[0.3, 0.1])]);
        assert!(best_keyword_link(&["foo"], &["mask"], &v).is_none());
    }

    #[test]
    fn exhaustive_pair_choice() {
        // cos(a,k1)=0, cos(a,k2)=0.6, cos(b,k1)=0.8, cos(b,k2)=0.28 by hand
        let v = vecs(&[("a", &[0.0, 1.0]), ("b", &[0.8, 0.6]), ("k1", &[1.0, 0.0]), ("k2", &[-0.8, 0.6])]);
        let l = best_keyword_link(&["a", "b"], &["k1", "k2"], &v).unwrap();
        assert_eq!((l.keyword.as_str(), l.token.as_str()), ("k1", "b"));
        assert!((l.weight - 0.8).abs() < 1e-12);
    }

    #[test]
    fn negative_similarity_clamps_and_ties_break() {
        let v = vecs(&[("a", &[1.0, 0.0]), ("k", &[-1.0, 0.0]), ("j", &[-1.0, 0.0])]);
        let l = best_keyword_link(&["a"], &["k", "j"], &v).unwrap();
        assert_eq!(l.keyword, "j");
        assert_eq!(l.weight, 0.0);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            s in 0.1f64..10.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            let v = vecs(&[("a", &a), ("b", &b), ("c", &scaled)]);
            let ab = v.cosine("a", "b").unwrap();
            prop_assert_eq!(ab, v.cosine("b", "a").unwrap());
            prop_assert!((ab - v.cosine("c", "b").unwrap()).abs() < 1e-12);
            let link = best_keyword_link(&["a", "c"], &["b"], &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&link.weight));
        }
    }
}
