use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::Scalar;

use super::TopicsError;

/// Ordered term list with a term -> column lookup.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self, TopicsError> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(TopicsError::DuplicateTerm(t.clone()));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, col: usize) -> &str {
        &self.terms[col]
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.terms {
            writeln!(out, "{t}")?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, TopicsError> {
        let terms = input
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.is_empty()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_terms(terms)
    }
}

/// The `cap` terms with the highest document frequency; ties broken
/// lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], cap: usize) -> Vocabulary {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let uniq: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let terms = ranked.into_iter().take(cap).map(|(t, _)| t.to_string()).collect();
    Vocabulary::from_terms(terms).expect("terms are unique")
}

/// Sparse document-term matrix; each row is sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix<T> {
    n_terms: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> TfidfMatrix<T> {
    pub fn from_rows(n_terms: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        TfidfMatrix { n_terms, rows }
    }

    /// Dense matrix as a sparse one, dropping zeros.
    pub fn from_dense(m: &super::DenseMatrix<T>) -> Self {
        let rows = (0..m.rows())
            .map(|i| {
                m.row(i).iter().enumerate().filter(|(_, &v)| v != T::zero()).map(|(j, &v)| (j, v)).collect()
            })
            .collect();
        TfidfMatrix { n_terms: m.cols(), rows }
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.rows[i].binary_search_by_key(&j, |&(c, _)| c).map_or(T::zero(), |p| self.rows[i][p].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> super::DenseMatrix<T> {
        let mut m = super::DenseMatrix::zeros(self.rows.len(), self.n_terms);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Raw-count tf times smoothed idf `ln((1+m)/(1+df)) + 1`, rows scaled to
/// unit L2 norm. Rows without vocabulary terms stay zero.
pub fn build_tfidf<T: Scalar, S: AsRef<str>>(
    docs: &[Vec<S>],
    vocab: &Vocabulary,
) -> Result<TfidfMatrix<T>, TopicsError> {
    if vocab.is_empty() {
        return Err(TopicsError::EmptyVocabulary);
    }
    let counts: Vec<BTreeMap<usize, usize>> = docs
        .iter()
        .map(|doc| {
            let mut c = BTreeMap::new();
            for t in doc {
                if let Some(j) = vocab.column(t.as_ref()) {
                    *c.entry(j).or_default() += 1;
                }
            }
            c
        })
        .collect();
    let mut df = vec![0usize; vocab.len()];
    for c in &counts {
        for &j in c.keys() {
            df[j] += 1;
        }
    }
    let m = T::lit(docs.len() as f64);
    let idf: Vec<T> =
        df.iter().map(|&d| ((T::one() + m) / (T::one() + T::lit(d as f64))).ln() + T::one()).collect();
    let rows = counts
        .into_iter()
        .map(|c| {
            let mut row: Vec<(usize, T)> =
                c.into_iter().map(|(j, n)| (j, T::lit(n as f64) * idf[j])).collect();
            let norm = row.iter().fold(T::zero(), |a, &(_, v)| a + v * v).sqrt();
            if norm > T::zero() {
                for (_, v) in &mut row {
                    *v = *v / norm;
                }
            }
            row
        })
        .collect();
    Ok(TfidfMatrix { n_terms: vocab.len(), rows })
}
