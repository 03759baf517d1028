use std::collections::HashSet;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use super::IngestError;

/// One tweet record as stored after collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTweet {
    #[serde(deserialize_with = "de_id")]
    pub tweet_id: u64,
    #[serde(serialize_with = "ser_time", deserialize_with = "de_time")]
    pub created_at: DateTime<Utc>,
    #[serde(deserialize_with = "de_id")]
    pub user_id: u64,
    pub text: String,
    #[serde(default, deserialize_with = "de_lower_list")]
    pub hashtags: Vec<String>,
    #[serde(default, deserialize_with = "de_str_list")]
    pub mentions: Vec<String>,
    #[serde(default, deserialize_with = "de_opt_id")]
    pub in_reply_to: Option<u64>,
    #[serde(default, deserialize_with = "de_opt_id")]
    pub quoted: Option<u64>,
}

/// A tweet with its cleaned token list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedTweet {
    pub tweet_id: u64,
    pub tokens: Vec<String>,
}

/// Row of the cleaned JSONL: the raw record plus `cleaned_text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedRecord {
    #[serde(flatten)]
    pub tweet: RawTweet,
    pub cleaned_text: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Int(u64),
    Text(String),
}

fn id_from(repr: IdRepr) -> Result<u64, String> {
    match repr {
        IdRepr::Int(v) => Ok(v),
        IdRepr::Text(s) => s.trim().parse().map_err(|_| format!("invalid id {s:?}")),
    }
}

fn de_id<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    id_from(IdRepr::deserialize(d)?).map_err(de::Error::custom)
}

fn de_opt_id<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    Option::<IdRepr>::deserialize(d)?.map(id_from).transpose().map_err(de::Error::custom)
}

fn de_str_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    let items = Option::<Vec<IdRepr>>::deserialize(d)?.unwrap_or_default();
    Ok(items
        .into_iter()
        .map(|r| match r {
            IdRepr::Int(v) => v.to_string(),
            IdRepr::Text(s) => s,
        })
        .collect())
}

fn de_lower_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Ok(Option::<Vec<String>>::deserialize(d)?
        .unwrap_or_default()
        .into_iter()
        .map(|s| s.trim_start_matches('#').to_lowercase())
        .collect())
}

pub(crate) fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .map(|t| t.and_utc())
        .map_err(|_| format!("unparseable timestamp {s:?}"))
}

fn de_time<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    parse_time(&String::deserialize(d)?).map_err(de::Error::custom)
}

fn ser_time<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub tweets: Vec<RawTweet>,
    pub errors: Vec<LineError>,
}

fn check(t: &RawTweet, seen: &HashSet<u64>) -> Result<(), String> {
    if seen.contains(&t.tweet_id) {
        return Err(format!("duplicate tweet_id {}", t.tweet_id));
    }
    if t.in_reply_to == Some(t.tweet_id) || t.quoted == Some(t.tweet_id) {
        return Err(format!("tweet {} references itself", t.tweet_id));
    }
    Ok(())
}

/// Parses JSONL tweet records. Bad lines are collected and skipped.
pub fn parse_tweets<R: BufRead>(input: R) -> Result<ParseOutcome, IngestError> {
    let mut out = ParseOutcome::default();
    let mut seen = HashSet::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawTweet>(&line)
            .map_err(|e| e.to_string())
            .and_then(|t| check(&t, &seen).map(|_| t));
        match parsed {
            Ok(t) => {
                seen.insert(t.tweet_id);
                out.tweets.push(t);
            }
            Err(message) => out.errors.push(LineError { line: n + 1, message }),
        }
    }
    Ok(out)
}

pub fn read_cleaned<R: BufRead>(input: R) -> Result<Vec<CleanedRecord>, IngestError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| IngestError::Line { line: n + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

pub fn write_cleaned<W: Write>(records: &[CleanedRecord], mut out: W) -> Result<(), IngestError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
