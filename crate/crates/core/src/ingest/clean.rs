use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;

use super::IngestError;

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S*").expect("url regex"));
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").expect("mention regex"));
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").expect("hashtag regex"));

const MIN_TOKEN_CHARS: usize = 3;

fn normalize_word(w: &str) -> String {
    w.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect()
}

fn read_word_lines<R: BufRead>(input: R) -> Result<Vec<String>, IngestError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.to_string());
    }
    Ok(out)
}

/// Stopword set. Entries are normalized the same way tokens are.
#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// English, Spanish and social-media filler lists shipped with the crate.
    pub fn bundled() -> Self {
        let mut s = Stopwords::default();
        for text in [
            include_str!("../../data/stopwords_en.txt"),
            include_str!("../../data/stopwords_es.txt"),
            include_str!("../../data/stopwords_slang.txt"),
        ] {
            s.extend_from_reader(text.as_bytes()).expect("bundled stopwords are valid");
        }
        s
    }

    pub fn extend_from_reader<R: BufRead>(&mut self, input: R) -> Result<(), IngestError> {
        for w in read_word_lines(input)? {
            let w = normalize_word(&w);
            if !w.is_empty() {
                self.0.insert(w);
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, word: &str) {
        self.0.insert(normalize_word(word));
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Irregular-form exceptions applied before suffix stripping.
#[derive(Debug, Clone, Default)]
pub struct LemmaMap(HashMap<String, String>);

impl LemmaMap {
    pub fn bundled() -> Self {
        Self::from_reader(include_str!("../../data/lemmas.txt").as_bytes())
            .expect("bundled lemma map is valid")
    }

    /// `inflected<TAB>lemma` per line, `#` comments.
    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, IngestError> {
        let mut map = HashMap::new();
        for (n, line) in read_word_lines(input)?.into_iter().enumerate() {
            let (from, to) = line.split_once('\t').ok_or_else(|| IngestError::Line {
                line: n + 1,
                message: "expected inflected<TAB>lemma".into(),
            })?;
            map.insert(normalize_word(from), normalize_word(to));
        }
        Ok(LemmaMap(map))
    }

    pub fn insert(&mut self, from: &str, to: &str) {
        self.0.insert(normalize_word(from), normalize_word(to));
    }

    /// Entries of `other` override existing ones.
    pub fn extend(&mut self, other: LemmaMap) {
        self.0.extend(other.0);
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.0.get(token).map(String::as_str)
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn has_vowel(s: &[char]) -> bool {
    s.iter().any(|&c| is_vowel(c))
}

fn is_consonant(c: char) -> bool {
    c.is_ascii_lowercase() && !is_vowel(c)
}

// Tidies a stem left by removing -ed/-ing: restores a dropped silent "e"
// ("vaccinat" -> "vaccinate", "hop" -> "hope") and undoubles a final
// consonant ("stopp" -> "stop").
fn repair_stem(mut stem: Vec<char>) -> Vec<char> {
    let n = stem.len();
    let ends = |s: &[char], suf: &str| {
        s.iter().rev().zip(suf.chars().rev()).all(|(a, b)| *a == b) && s.len() >= suf.len()
    };
    if ends(&stem, "at") || ends(&stem, "bl") || ends(&stem, "iz") {
        stem.push('e');
        return stem;
    }
    if n >= 2 && stem[n - 1] == stem[n - 2] && is_consonant(stem[n - 1]) {
        if !matches!(stem[n - 1], 'l' | 's' | 'z') {
            stem.pop();
        }
        return stem;
    }
    if n == 3
        && is_consonant(stem[0])
        && is_vowel(stem[1])
        && is_consonant(stem[2])
        && !matches!(stem[2], 'w' | 'x' | 'y')
    {
        stem.push('e');
    }
    stem
}

/// Conservative English suffix stripper for plural and verbal endings.
pub fn strip_suffix(token: &str) -> String {
    let chars: Vec<char> = token.chars().collect();
    let n = chars.len();
    let ends = |suf: &str| token.ends_with(suf);
    let stripped: Vec<char> = if ends("sses") {
        chars[..n - 2].to_vec()
    } else if ends("ies") && n > 4 {
        let mut s = chars[..n - 3].to_vec();
        s.push('y');
        s
    } else if (ends("ches") || ends("shes") || ends("xes") || ends("zes")) && n > 4 {
        chars[..n - 2].to_vec()
    } else if ends("s") && !ends("ss") && !ends("us") && !ends("is") && n > 3 {
        chars[..n - 1].to_vec()
    } else if ends("ing") && n > 5 && has_vowel(&chars[..n - 3]) {
        repair_stem(chars[..n - 3].to_vec())
    } else if ends("eed") {
        chars.clone()
    } else if ends("ed") && n > 4 && has_vowel(&chars[..n - 2]) {
        repair_stem(chars[..n - 2].to_vec())
    } else {
        chars.clone()
    };
    stripped.into_iter().collect()
}

fn valid_token(t: &str, stopwords: &Stopwords) -> bool {
    t.chars().count() >= MIN_TOKEN_CHARS
        && t.chars().all(|c| c.is_alphanumeric() && !c.is_uppercase())
        && !stopwords.contains(t)
}

/// Lemma for an already-valid token; falls back to the token itself when the
/// lemma would break the token rules.
pub fn lemmatize(token: &str, stopwords: &Stopwords, lemmas: &LemmaMap) -> String {
    let lemma = match lemmas.get(token) {
        Some(l) => l.to_string(),
        None => strip_suffix(token),
    };
    if valid_token(&lemma, stopwords) {
        lemma
    } else {
        token.to_string()
    }
}

/// Cleaning pipeline: strip URLs, @mentions and #hashtags, lowercase, drop
/// non-alphanumeric characters, split on whitespace, drop tokens shorter
/// than three characters and stopwords, then lemmatize.
pub fn clean_text(text: &str, stopwords: &Stopwords, lemmas: &LemmaMap) -> Vec<String> {
    let text = URL.replace_all(text, " ");
    let text = MENTION.replace_all(&text, " ");
    let text = HASHTAG.replace_all(&text, " ");
    let text: String =
        text.to_lowercase().chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    text.split_whitespace()
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS)
        .filter(|t| !stopwords.contains(t))
        .map(|t| lemmatize(t, stopwords, lemmas))
        .collect()
}
