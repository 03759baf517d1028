//! Lexicon sentence scoring and clause-level aspect sentiment.
//!
//! Scores are `v / sqrt(v² + 15)` over the summed valence `v` of lexicon
//! tokens, so they lie strictly inside (−1, 1). A "not", "no" or "never" in
//! the two tokens before a lexicon hit flips that hit's sign.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use thiserror::Error;

use crate::Scalar;

const NORMALIZATION_ALPHA: f64 = 15.0;
const NEGATION_WINDOW: usize = 2;
const NEGATORS: [&str; 3] = ["not", "no", "never"];
const CLAUSE_PUNCTUATION: [char; 6] = ['.', ',', ';', ':', '!', '?'];
const CONJUNCTIONS: [&str; 8] = ["and", "but", "or", "because", "so", "while", "although", "however"];

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token → valence map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon<T> {
    valences: HashMap<String, T>,
}

impl<T: Scalar> Lexicon<T> {
    pub fn new() -> Self {
        Lexicon { valences: HashMap::new() }
    }

    pub fn insert(&mut self, token: &str, valence: T) {
        self.valences.insert(token.to_lowercase(), valence);
    }

    pub fn get(&self, token: &str) -> Option<T> {
        self.valences.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    /// Lexicon with every valence negated.
    pub fn negated(&self) -> Self {
        Lexicon { valences: self.valences.iter().map(|(k, &v)| (k.clone(), -v)).collect() }
    }

    /// `token<TAB>valence[<TAB>...]` per line; extra columns (as in the VADER
    /// lexicon) are ignored, `#` lines are comments.
    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, SentimentError> {
        let mut lex = Lexicon::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| SentimentError::Line { line: n + 1, message };
            let mut cols = line.split('\t');
            let token = cols.next().unwrap_or_default().trim();
            let raw = cols.next().ok_or_else(|| err("expected token<TAB>valence".into()))?.trim();
            let v: f64 = raw.parse().map_err(|_| err(format!("invalid valence {raw:?}")))?;
            if !v.is_finite() || token.is_empty() {
                return Err(err(format!("invalid entry {line:?}")));
            }
            lex.insert(token, T::lit(v));
        }
        Ok(lex)
    }
}

/// Lowercased whitespace tokens with surrounding punctuation trimmed.
pub fn score_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn normalize<T: Scalar>(v: T) -> T {
    if v == T::zero() {
        return T::zero();
    }
    v / (v * v + T::lit(NORMALIZATION_ALPHA)).sqrt()
}

fn valence_sum<T: Scalar>(tokens: &[String], lexicon: &Lexicon<T>) -> T {
    let mut sum = T::zero();
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(v) = lexicon.get(tok) {
            let negated =
                tokens[i.saturating_sub(NEGATION_WINDOW)..i].iter().any(|t| NEGATORS.contains(&t.as_str()));
            sum = sum + if negated { -v } else { v };
        }
    }
    sum
}

/// Sentence score in (−1, 1).
pub fn score_text<T: Scalar>(text: &str, lexicon: &Lexicon<T>) -> T {
    normalize(valence_sum(&score_tokens(text), lexicon))
}

/// A clause as a byte span of the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clause {
    pub start: usize,
    pub end: usize,
    pub position: usize,
}

impl Clause {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

fn push_clause(text: &str, start: usize, end: usize, out: &mut Vec<Clause>) {
    let span = &text[start..end];
    let trimmed = span.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = span.len() - span.trim_start().len();
    let s = start + lead;
    out.push(Clause { start: s, end: s + trimmed.len(), position: out.len() });
}

/// Splits on `. , ; : ! ?` (kept with the preceding clause) and on the
/// conjunctions and/but/or/because/so/while/although/however (kept with
/// the following clause). Empty clauses are dropped.
pub fn split_clauses(text: &str) -> Vec<Clause> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    let mut prev_alnum = false;
    while let Some((i, c)) = chars.next() {
        if CLAUSE_PUNCTUATION.contains(&c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if !CLAUSE_PUNCTUATION.contains(&d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            push_clause(text, start, end, &mut out);
            start = end;
            prev_alnum = false;
            continue;
        }
        if c.is_alphanumeric() && !prev_alnum {
            let word_end = text[i..].find(|ch: char| !ch.is_alphanumeric()).map_or(text.len(), |off| i + off);
            let word = text[i..word_end].to_lowercase();
            if CONJUNCTIONS.contains(&word.as_str()) {
                push_clause(text, start, i, &mut out);
                start = i;
            }
        }
        prev_alnum = c.is_alphanumeric();
    }
    push_clause(text, start, text.len(), &mut out);
    out
}

/// Mean clause score for each aspect word found in at least one clause.
pub fn aspect_scores<T: Scalar, S: AsRef<str>>(
    text: &str,
    aspects: &[S],
    lexicon: &Lexicon<T>,
) -> BTreeMap<String, T> {
    let wanted: BTreeSet<&str> = aspects.iter().map(AsRef::as_ref).collect();
    let mut acc: BTreeMap<String, (T, usize)> = BTreeMap::new();
    for clause in split_clauses(text) {
        let tokens = score_tokens(clause.text(text));
        let score = normalize(valence_sum(&tokens, lexicon));
        let present: BTreeSet<&str> =
            tokens.iter().map(String::as_str).filter(|t| wanted.contains(t)).collect();
        for a in present {
            let e = acc.entry(a.to_string()).or_insert((T::zero(), 0));
            e.0 = e.0 + score;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (sum, n))| (k, sum / T::lit(n as f64))).collect()
}
