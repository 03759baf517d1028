use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::GraphError;

/// The seven entity kinds of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Tweet,
    User,
    Hashtag,
    Topic,
    Keyword,
    Event,
    Date,
}

impl EntityKind {
    pub const ALL: [EntityKind; 7] = [
        EntityKind::Tweet,
        EntityKind::User,
        EntityKind::Hashtag,
        EntityKind::Topic,
        EntityKind::Keyword,
        EntityKind::Event,
        EntityKind::Date,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Tweet => "tweet",
            EntityKind::User => "user",
            EntityKind::Hashtag => "hashtag",
            EntityKind::Topic => "topic",
            EntityKind::Keyword => "keyword",
            EntityKind::Event => "event",
            EntityKind::Date => "date",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GraphError::UnknownKind(s.to_string()))
    }
}

/// A typed entity identifier. Ids are unique within a kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef {
    kind: EntityKind,
    id: String,
}

impl EntityRef {
    /// Validates and builds a reference.
    ///
    /// Ids must be nonempty and free of tabs and line breaks; `Date` ids must be
    /// canonical `YYYY-MM-DD` calendar dates.
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Result<Self, GraphError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GraphError::MalformedId { kind, id, reason: "empty id" });
        }
        if id.contains(['\t', '\n', '\r']) {
            return Err(GraphError::MalformedId { kind, id, reason: "id contains a tab or line break" });
        }
        if kind == EntityKind::Date {
            match NaiveDate::parse_from_str(&id, "%Y-%m-%d") {
                Ok(d) if d.format("%Y-%m-%d").to_string() == id => {}
                _ => {
                    return Err(GraphError::MalformedId { kind, id, reason: "not an ISO-8601 calendar date" })
                }
            }
        }
        Ok(EntityRef { kind, id })
    }

    pub fn date(date: NaiveDate) -> Self {
        EntityRef { kind: EntityKind::Date, id: date.format("%Y-%m-%d").to_string() }
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

impl FromStr for EntityRef {
    type Err = GraphError;

    /// Parses the `kind:id` form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, id) = s.split_once(':').ok_or_else(|| GraphError::UnknownKind(s.to_string()))?;
        EntityRef::new(kind.parse()?, id)
    }
}

/// The eleven relation types, each with a fixed (head kind, tail kind) signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    AuthoredBy,
    RepliesTo,
    Quotes,
    Mentions,
    HasHashtag,
    TweetedOn,
    OccurredOn,
    HasTopic,
    HasKeyword,
    AssociatedWith,
    HasChangepoint,
}

impl RelationType {
    pub const ALL: [RelationType; 11] = [
        RelationType::AuthoredBy,
        RelationType::RepliesTo,
        RelationType::Quotes,
        RelationType::Mentions,
        RelationType::HasHashtag,
        RelationType::TweetedOn,
        RelationType::OccurredOn,
        RelationType::HasTopic,
        RelationType::HasKeyword,
        RelationType::AssociatedWith,
        RelationType::HasChangepoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::AuthoredBy => "authored_by",
            RelationType::RepliesTo => "replies_to",
            RelationType::Quotes => "quotes",
            RelationType::Mentions => "mentions",
            RelationType::HasHashtag => "has_hashtag",
            RelationType::TweetedOn => "tweeted_on",
            RelationType::OccurredOn => "occurred_on",
            RelationType::HasTopic => "has_topic",
            RelationType::HasKeyword => "has_keyword",
            RelationType::AssociatedWith => "associated_with",
            RelationType::HasChangepoint => "has_changepoint",
        }
    }

    /// `(head kind, tail kind)` accepted by this relation.
    pub fn signature(self) -> (EntityKind, EntityKind) {
        use EntityKind::*;
        match self {
            RelationType::AuthoredBy => (Tweet, User),
            RelationType::RepliesTo | RelationType::Quotes => (Tweet, Tweet),
            RelationType::Mentions => (Tweet, User),
            RelationType::HasHashtag => (Tweet, Hashtag),
            RelationType::TweetedOn => (Tweet, Date),
            RelationType::OccurredOn => (Event, Date),
            RelationType::HasTopic => (Tweet, Topic),
            RelationType::HasKeyword => (Tweet, Keyword),
            RelationType::AssociatedWith => (Keyword, Topic),
            RelationType::HasChangepoint => (Topic, Date),
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, RelationType::HasTopic | RelationType::HasKeyword | RelationType::AssociatedWith)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| GraphError::UnknownRelation(s.to_string()))
    }
}

/// A typed, optionally weighted directed edge `(head, tail, relation, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fact {
    pub head: EntityRef,
    pub tail: EntityRef,
    pub relation: RelationType,
    pub weight: Option<f64>,
}

impl Fact {
    pub fn new(head: EntityRef, relation: RelationType, tail: EntityRef) -> Self {
        Fact { head, tail, relation, weight: None }
    }

    pub fn weighted(head: EntityRef, relation: RelationType, tail: EntityRef, weight: f64) -> Self {
        Fact { head, tail, relation, weight: Some(weight) }
    }

    /// Checks the relation signature and the weight rule.
    pub fn validate(&self) -> Result<(), GraphError> {
        let (hk, tk) = self.relation.signature();
        if self.head.kind() != hk || self.tail.kind() != tk {
            return Err(GraphError::SignatureMismatch {
                relation: self.relation,
                head: self.head.kind(),
                tail: self.tail.kind(),
            });
        }
        match (self.relation.is_weighted(), self.weight) {
            (true, Some(w)) if (0.0..=1.0).contains(&w) => Ok(()),
            (true, Some(w)) => Err(GraphError::WeightOutOfRange(w)),
            (true, None) => Err(GraphError::MissingWeight(self.relation)),
            (false, Some(_)) => Err(GraphError::UnexpectedWeight(self.relation)),
            (false, None) => Ok(()),
        }
    }
}

/// Disease statistics attached to a `Date` entity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateAttrs {
    pub case_count: u64,
    pub new_cases: u64,
    pub death_count: u64,
    pub new_deaths: u64,
}
