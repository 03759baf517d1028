//! Assembles the knowledge graph from the per-stage tables.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::{Attrs, DateAttrs, EntityKind, EntityRef, Fact, GraphError, KnowledgeGraph, RelationType};
use crate::ingest::RawTweet;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("span start {0} is after end {1}")]
    Span(NaiveDate, NaiveDate),
    #[error("{what} date {date} lies outside the span")]
    OutOfSpan { what: String, date: NaiveDate },
    #[error("topic {0} does not exist")]
    UnknownTopic(usize),
    #[error("tweet {0} appears twice")]
    DuplicateTweet(u64),
    #[error("tweet {tweet} {relation} tweet {target}, which is not earlier")]
    Causality { tweet: u64, relation: RelationType, target: u64 },
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventCategory {
    Policy,
    Milestone,
    Vaccine,
    Other,
}

impl EventCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            EventCategory::Policy => "policy",
            EventCategory::Milestone => "milestone",
            EventCategory::Vaccine => "vaccine",
            EventCategory::Other => "other",
        }
    }
}

impl FromStr for EventCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "policy" => Ok(EventCategory::Policy),
            "milestone" => Ok(EventCategory::Milestone),
            "vaccine" => Ok(EventCategory::Vaccine),
            "other" => Ok(EventCategory::Other),
            other => Err(format!("unknown event category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub event_id: String,
    pub date: NaiveDate,
    pub category: EventCategory,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Topic dominance threshold used upstream for `has_topic`.
    pub dominance: f64,
    /// Keywords per topic for `associated_with`.
    pub top_k: usize,
    pub penalty: f64,
}

impl BuildConfig {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        BuildConfig { start, end, dominance: 0.8, top_k: crate::topics::DEFAULT_TOP_K, penalty: 1.0 }
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        let n = (self.end - self.start).num_days() + 1;
        (0..n.max(0)).map(move |i| start + Duration::days(i))
    }

    fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// The keyword a tweet links to, with optional aspect sentiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TweetKeyword {
    pub keyword: String,
    pub weight: f64,
    pub aspect_sentiment: Option<f64>,
}

/// Stage outputs the graph is assembled from. Maps keyed by tweet id.
#[derive(Debug, Clone, Default)]
pub struct BuildInputs {
    pub tweets: Vec<RawTweet>,
    /// Number of topics in the model; topics are `topic-0 .. topic-{n-1}`.
    pub topic_count: usize,
    pub memberships: BTreeMap<u64, Vec<(usize, f64)>>,
    /// Per topic: `(keyword, normalized weight)` in rank order.
    pub topic_keywords: Vec<Vec<(String, f64)>>,
    pub sentiment: BTreeMap<u64, f64>,
    pub keyword_links: BTreeMap<u64, TweetKeyword>,
    /// `(topic, date)` pairs.
    pub changepoints: Vec<(usize, NaiveDate)>,
    pub events: Vec<EventRecord>,
    pub date_stats: BTreeMap<NaiveDate, DateAttrs>,
    /// Lowercased handle → user id, for resolving textual mentions.
    pub handles: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub skipped_replies: usize,
    pub skipped_quotes: usize,
    pub tweets_without_topic: usize,
}

pub fn topic_id(topic: usize) -> String {
    format!("topic-{topic}")
}

fn entity(kind: EntityKind, id: impl Into<String>) -> Result<EntityRef, BuildError> {
    Ok(EntityRef::new(kind, id)?)
}

fn date_attrs(stats: &DateAttrs) -> Attrs {
    match serde_json::to_value(stats) {
        Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
        _ => unreachable!("DateAttrs serializes to an object"),
    }
}

fn add(graph: &mut KnowledgeGraph, fact: Fact) -> Result<(), BuildError> {
    graph.ensure_entity(&fact.head);
    graph.ensure_entity(&fact.tail);
    graph.add_fact(&fact)?;
    Ok(())
}

fn mention_user(mention: &str, handles: &BTreeMap<String, u64>) -> String {
    let m = mention.trim().trim_start_matches('@');
    if m.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(id) = m.parse::<u64>() {
            return id.to_string();
        }
    }
    let handle = m.to_lowercase();
    match handles.get(&handle) {
        Some(id) => id.to_string(),
        None => handle,
    }
}

/// Builds the graph. Reply and quote targets absent from the corpus are
/// skipped and counted; targets that are present must be strictly earlier
/// by `(created_at, tweet_id)`.
pub fn build(
    inputs: &BuildInputs,
    config: &BuildConfig,
) -> Result<(KnowledgeGraph, BuildReport), BuildError> {
    if config.start > config.end {
        return Err(BuildError::Span(config.start, config.end));
    }
    let mut g = KnowledgeGraph::new();
    let mut report = BuildReport::default();

    for d in config.days() {
        let attrs = inputs.date_stats.get(&d).map(date_attrs).unwrap_or_default();
        g.add_entity(EntityRef::date(d), attrs);
    }
    let topics: Vec<EntityRef> =
        (0..inputs.topic_count).map(|i| entity(EntityKind::Topic, topic_id(i))).collect::<Result<_, _>>()?;
    for t in &topics {
        g.add_entity(t.clone(), Attrs::new());
    }
    let topic = |i: usize| topics.get(i).cloned().ok_or(BuildError::UnknownTopic(i));

    for e in &inputs.events {
        if !config.contains(e.date) {
            return Err(BuildError::OutOfSpan { what: format!("event {}", e.event_id), date: e.date });
        }
        let ev = entity(EntityKind::Event, e.event_id.clone())?;
        let attrs = Attrs::from([
            ("category".to_string(), json!(e.category.as_str())),
            ("description".to_string(), json!(e.description)),
        ]);
        g.add_entity(ev.clone(), attrs);
        add(&mut g, Fact::new(ev, RelationType::OccurredOn, EntityRef::date(e.date)))?;
    }

    let mut order: HashMap<u64, (chrono::DateTime<chrono::Utc>, u64)> = HashMap::new();
    for t in &inputs.tweets {
        if order.insert(t.tweet_id, (t.created_at, t.tweet_id)).is_some() {
            return Err(BuildError::DuplicateTweet(t.tweet_id));
        }
    }

    for t in &inputs.tweets {
        let day = t.created_at.date_naive();
        if !config.contains(day) {
            return Err(BuildError::OutOfSpan { what: format!("tweet {}", t.tweet_id), date: day });
        }
        let tw = entity(EntityKind::Tweet, t.tweet_id.to_string())?;
        let mut attrs = Attrs::from([(
            "created_at".to_string(),
            json!(t.created_at.format("%Y-%m-%dT%H:%M:%SZ").to_string()),
        )]);
        if let Some(s) = inputs.sentiment.get(&t.tweet_id) {
            attrs.insert("sentiment".to_string(), json!(s));
        }
        g.add_entity(tw.clone(), attrs);

        let user = entity(EntityKind::User, t.user_id.to_string())?;
        add(&mut g, Fact::new(tw.clone(), RelationType::AuthoredBy, user))?;
        add(&mut g, Fact::new(tw.clone(), RelationType::TweetedOn, EntityRef::date(day)))?;
        for tag in &t.hashtags {
            let h = entity(EntityKind::Hashtag, tag.clone())?;
            add(&mut g, Fact::new(tw.clone(), RelationType::HasHashtag, h))?;
        }
        for m in &t.mentions {
            let u = entity(EntityKind::User, mention_user(m, &inputs.handles))?;
            add(&mut g, Fact::new(tw.clone(), RelationType::Mentions, u))?;
        }
        for (target, relation) in [(t.in_reply_to, RelationType::RepliesTo), (t.quoted, RelationType::Quotes)]
        {
            let Some(target) = target else { continue };
            match order.get(&target) {
                None => match relation {
                    RelationType::RepliesTo => report.skipped_replies += 1,
                    _ => report.skipped_quotes += 1,
                },
                Some(&key) if key >= (t.created_at, t.tweet_id) => {
                    return Err(BuildError::Causality { tweet: t.tweet_id, relation, target })
                }
                Some(_) => {
                    let other = entity(EntityKind::Tweet, target.to_string())?;
                    add(&mut g, Fact::new(tw.clone(), relation, other))?;
                }
            }
        }
        match inputs.memberships.get(&t.tweet_id) {
            Some(ms) if !ms.is_empty() => {
                for &(i, w) in ms {
                    add(&mut g, Fact::weighted(tw.clone(), RelationType::HasTopic, topic(i)?, w))?;
                }
            }
            _ => report.tweets_without_topic += 1,
        }
        if let Some(link) = inputs.keyword_links.get(&t.tweet_id) {
            let k = entity(EntityKind::Keyword, link.keyword.clone())?;
            add(&mut g, Fact::weighted(tw.clone(), RelationType::HasKeyword, k.clone(), link.weight))?;
            if let Some(s) = link.aspect_sentiment {
                g.set_fact_attr(&tw, RelationType::HasKeyword, &k, "aspect_sentiment", json!(s))?;
            }
        }
    }

    for (i, words) in inputs.topic_keywords.iter().enumerate() {
        let tp = topic(i)?;
        for (word, w) in words.iter().take(config.top_k) {
            let k = entity(EntityKind::Keyword, word.clone())?;
            add(&mut g, Fact::weighted(k, RelationType::AssociatedWith, tp.clone(), *w))?;
        }
    }

    for &(i, d) in &inputs.changepoints {
        if !config.contains(d) {
            return Err(BuildError::OutOfSpan { what: format!("changepoint of {}", topic_id(i)), date: d });
        }
        add(&mut g, Fact::new(topic(i)?, RelationType::HasChangepoint, EntityRef::date(d)))?;
    }

    if report.skipped_replies + report.skipped_quotes > 0 {
        log::info!(
            "skipped {} replies and {} quotes to tweets outside the corpus",
            report.skipped_replies,
            report.skipped_quotes
        );
    }
    Ok((g, report))
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("date {s:?}: {e}"))
}

fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, BuildError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(BuildError::Line {
            line: 1,
            message: format!("expected header {}, found {}", header.join(","), got.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads `event_id,date,category,description`.
pub fn load_events<R: Read>(input: R) -> Result<Vec<EventRecord>, BuildError> {
    let mut out = Vec::new();
    for (line, rec) in records(input, &["event_id", "date", "category", "description"])? {
        let err = |message: String| BuildError::Line { line, message };
        let event_id = rec[0].to_string();
        if event_id.is_empty() {
            return Err(err("empty event_id".into()));
        }
        out.push(EventRecord {
            event_id,
            date: parse_date(&rec[1]).map_err(err)?,
            category: rec[2].parse().map_err(err)?,
            description: rec[3].to_string(),
        });
    }
    Ok(out)
}

/// Reads `date,case_count,new_cases,death_count,new_deaths`. Returns the
/// table and warnings for days whose `new_cases` disagrees with the change
/// in `case_count` from the previous calendar day.
pub fn load_date_stats<R: Read>(
    input: R,
) -> Result<(BTreeMap<NaiveDate, DateAttrs>, Vec<String>), BuildError> {
    let header = ["date", "case_count", "new_cases", "death_count", "new_deaths"];
    let mut table = BTreeMap::new();
    for (line, rec) in records(input, &header)? {
        let err = |message: String| BuildError::Line { line, message };
        let date = parse_date(&rec[0]).map_err(err)?;
        let mut counts = [0u64; 4];
        for (k, c) in counts.iter_mut().enumerate() {
            let raw = &rec[k + 1];
            let v: i64 =
                raw.parse().map_err(|_| err(format!("{}: not an integer: {raw:?}", header[k + 1])))?;
            if v < 0 {
                return Err(err(format!("{}: negative count {v}", header[k + 1])));
            }
            *c = v as u64;
        }
        let attrs = DateAttrs {
            case_count: counts[0],
            new_cases: counts[1],
            death_count: counts[2],
            new_deaths: counts[3],
        };
        if table.insert(date, attrs).is_some() {
            return Err(err(format!("duplicate date {date}")));
        }
    }
    let mut warnings = Vec::new();
    for (d, a) in &table {
        if let Some(p) = table.get(&(*d - Duration::days(1))) {
            let delta = a.case_count as i64 - p.case_count as i64;
            if delta != a.new_cases as i64 {
                let w = format!("{d}: new_cases {} but case_count changed by {delta}", a.new_cases);
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    Ok((table, warnings))
}
