use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use super::{IngestError, RawTweet};

/// Lowercased keyword phrases, each stored as its token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList {
    phrases: BTreeSet<Vec<String>>,
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn match_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl KeywordList {
    pub fn new<I, S>(keywords: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let phrases: BTreeSet<Vec<String>> =
            keywords.into_iter().map(|k| match_tokens(k.as_ref())).filter(|p| !p.is_empty()).collect();
        if phrases.is_empty() {
            return Err(IngestError::EmptyKeywords);
        }
        Ok(KeywordList { phrases })
    }

    /// One keyword per line; `#` starts a comment line.
    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, IngestError> {
        let mut kws = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            kws.push(line.to_string());
        }
        Self::new(kws)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Whether any keyword occurs in `text` as a whole token sequence.
    pub fn matches(&self, text: &str) -> bool {
        let tokens = match_tokens(text);
        self.phrases.iter().any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Keeps every tweet that matches a keyword, plus every tweet in the same
/// reply thread (ancestors and descendants) as a matched tweet. Input order
/// is preserved.
pub fn filter_corpus(tweets: &[RawTweet], keywords: &KeywordList) -> Vec<RawTweet> {
    let pos: HashMap<u64, usize> = tweets.iter().enumerate().map(|(i, t)| (t.tweet_id, i)).collect();
    let mut parent: Vec<usize> = (0..tweets.len()).collect();
    for (i, t) in tweets.iter().enumerate() {
        if let Some(&j) = t.in_reply_to.and_then(|p| pos.get(&p)) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a] = b;
        }
    }
    let mut hit_roots = vec![false; tweets.len()];
    for (i, t) in tweets.iter().enumerate() {
        if keywords.matches(&t.text) {
            let r = find(&mut parent, i);
            hit_roots[r] = true;
        }
    }
    (0..tweets.len()).filter(|&i| hit_roots[find(&mut parent, i)]).map(|i| tweets[i].clone()).collect()
}
