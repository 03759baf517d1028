//! Tweet parsing, keyword filtering with reply-thread closure, and text cleaning.

mod clean;
mod filter;
mod tweet;

use thiserror::Error;

pub use clean::{clean_text, lemmatize, strip_suffix, LemmaMap, Stopwords};
pub use filter::{filter_corpus, match_tokens, KeywordList};
pub use tweet::{
    parse_tweets, read_cleaned, write_cleaned, CleanedRecord, CleanedTweet, LineError, ParseOutcome, RawTweet,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("keyword list is empty")]
    EmptyKeywords,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cleans every tweet, keeping input order.
pub fn clean_corpus(tweets: &[RawTweet], stopwords: &Stopwords, lemmas: &LemmaMap) -> Vec<CleanedRecord> {
    tweets
        .iter()
        .map(|t| CleanedRecord { tweet: t.clone(), cleaned_text: clean_text(&t.text, stopwords, lemmas) })
        .collect()
}
