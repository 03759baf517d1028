//! Typed, weighted, directed edge-labelled graph store.
//!
//! Entities are interned in insertion order; the resulting dense index is what
//! the embedding and community code operate on. Facts are unique per
//! `(head, tail, relation)` and re-inserting a triple overwrites its weight.

mod components;
mod io;
mod types;

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use thiserror::Error;

pub use components::{
    longest_path_length, wcc_histograms, weakly_connected_components, Component, WccHistograms,
};
pub use io::{export_attrs, export_triples, import_graph, TRIPLES_HEADER};
pub use types::{DateAttrs, EntityKind, EntityRef, Fact, RelationType};

/// Free-form attribute map, serialized as a JSON object.
pub type Attrs = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed {kind} id {id:?}: {reason}")]
    MalformedId { kind: EntityKind, id: String, reason: &'static str },
    #[error("unknown entity kind {0:?}")]
    UnknownKind(String),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("relation {relation} expects a different signature, got {head} -> {tail}")]
    SignatureMismatch { relation: RelationType, head: EntityKind, tail: EntityKind },
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("relation {0} requires a weight")]
    MissingWeight(RelationType),
    #[error("relation {0} carries no weight")]
    UnexpectedWeight(RelationType),
    #[error("missing endpoint {0}")]
    MissingEndpoint(EntityRef),
    #[error("no such fact {0}")]
    NoSuchFact(String),
    #[error("cycle through {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", "))]
    Cycle(Vec<EntityRef>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fact in index form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub head: usize,
    pub tail: usize,
    pub relation: RelationType,
    pub weight: Option<f64>,
}

/// Table-style counts: relations, entities, and entities per kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub relations: usize,
    pub entities: usize,
    pub tweets: usize,
    pub users: usize,
    pub hashtags: usize,
    pub topics: usize,
    pub keywords: usize,
    pub events: usize,
    pub dates: usize,
}

impl GraphStats {
    pub const CSV_HEADER: &'static str =
        "Relations,Entities,Tweets,Users,Hashtags,Topics,Keywords,Events,Dates";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.relations,
            self.entities,
            self.tweets,
            self.users,
            self.hashtags,
            self.topics,
            self.keywords,
            self.events,
            self.dates
        )
    }
}

// Weights are kept on the 6-decimal grid the triples file uses, so that a
// file round trip reproduces them exactly.
fn quantize_weight(w: f64) -> f64 {
    (w * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: IndexMap<EntityRef, Attrs>,
    by_kind: [Vec<usize>; 7],
    triples: Vec<Triple>,
    triple_index: HashMap<(usize, usize, RelationType), usize>,
    by_head: Vec<Vec<usize>>,
    by_tail: Vec<Vec<usize>>,
    by_relation: [Vec<usize>; 11],
    fact_attrs: BTreeMap<usize, Attrs>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities.len() == other.entities.len()
            && self.entities.iter().eq(other.entities.iter())
            && self.triples == other.triples
            && self.fact_attrs == other.fact_attrs
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entity or merges `attrs` into an existing one (last writer wins).
    pub fn add_entity(&mut self, entity: EntityRef, attrs: Attrs) -> usize {
        if let Some((idx, _, existing)) = self.entities.get_full_mut(&entity) {
            existing.extend(attrs);
            return idx;
        }
        let kind = entity.kind();
        let (idx, _) = self.entities.insert_full(entity, attrs);
        self.by_kind[kind as usize].push(idx);
        self.by_head.push(Vec::new());
        self.by_tail.push(Vec::new());
        idx
    }

    /// Validates `kind`/`id` and inserts the entity.
    pub fn add_entity_id(&mut self, kind: EntityKind, id: &str, attrs: Attrs) -> Result<usize, GraphError> {
        Ok(self.add_entity(EntityRef::new(kind, id)?, attrs))
    }

    pub fn ensure_entity(&mut self, entity: &EntityRef) -> usize {
        match self.entities.get_index_of(entity) {
            Some(idx) => idx,
            None => self.add_entity(entity.clone(), Attrs::new()),
        }
    }

    /// Adds a fact whose endpoints already exist. Returns `true` when the
    /// triple is new; an existing triple only has its weight replaced.
    pub fn add_fact(&mut self, fact: &Fact) -> Result<bool, GraphError> {
        fact.validate()?;
        let head = self
            .entities
            .get_index_of(&fact.head)
            .ok_or_else(|| GraphError::MissingEndpoint(fact.head.clone()))?;
        let tail = self
            .entities
            .get_index_of(&fact.tail)
            .ok_or_else(|| GraphError::MissingEndpoint(fact.tail.clone()))?;
        let weight = fact.weight.map(quantize_weight);
        let key = (head, tail, fact.relation);
        if let Some(&i) = self.triple_index.get(&key) {
            self.triples[i].weight = weight;
            return Ok(false);
        }
        let i = self.triples.len();
        self.triples.push(Triple { head, tail, relation: fact.relation, weight });
        self.triple_index.insert(key, i);
        self.by_head[head].push(i);
        self.by_tail[tail].push(i);
        self.by_relation[fact.relation.index()].push(i);
        Ok(true)
    }

    /// Sets one attribute on an existing fact.
    pub fn set_fact_attr(
        &mut self,
        head: &EntityRef,
        relation: RelationType,
        tail: &EntityRef,
        key: &str,
        value: serde_json::Value,
    ) -> Result<(), GraphError> {
        let i = self
            .fact_index(head, relation, tail)
            .ok_or_else(|| GraphError::NoSuchFact(format!("{head} {relation} {tail}")))?;
        self.fact_attrs.entry(i).or_default().insert(key.to_string(), value);
        Ok(())
    }

    pub fn fact_index(&self, head: &EntityRef, relation: RelationType, tail: &EntityRef) -> Option<usize> {
        let h = self.entities.get_index_of(head)?;
        let t = self.entities.get_index_of(tail)?;
        self.triple_index.get(&(h, t, relation)).copied()
    }

    pub fn contains(&self, head: usize, tail: usize, relation: RelationType) -> bool {
        self.triple_index.contains_key(&(head, tail, relation))
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn fact_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, idx: usize) -> &EntityRef {
        self.entities.get_index(idx).map(|(e, _)| e).expect("entity index out of range")
    }

    pub fn entity_index(&self, entity: &EntityRef) -> Option<usize> {
        self.entities.get_index_of(entity)
    }

    pub fn attrs(&self, entity: &EntityRef) -> Option<&Attrs> {
        self.entities.get(entity)
    }

    pub fn entities(&self) -> impl Iterator<Item = (&EntityRef, &Attrs)> {
        self.entities.iter()
    }

    /// Entity indices of one kind, in insertion order.
    pub fn entities_of_kind(&self, kind: EntityKind) -> &[usize] {
        &self.by_kind[kind as usize]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn fact(&self, i: usize) -> Fact {
        let t = self.triples[i];
        Fact {
            head: self.entity(t.head).clone(),
            tail: self.entity(t.tail).clone(),
            relation: t.relation,
            weight: t.weight,
        }
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        (0..self.triples.len()).map(|i| self.fact(i))
    }

    pub fn fact_attrs(&self, i: usize) -> Option<&Attrs> {
        self.fact_attrs.get(&i)
    }

    pub fn facts_with_head(&self, entity: usize) -> &[usize] {
        &self.by_head[entity]
    }

    pub fn facts_with_tail(&self, entity: usize) -> &[usize] {
        &self.by_tail[entity]
    }

    pub fn facts_with_relation(&self, relation: RelationType) -> &[usize] {
        &self.by_relation[relation.index()]
    }

    pub fn stats(&self) -> GraphStats {
        let count = |k: EntityKind| self.by_kind[k as usize].len();
        GraphStats {
            relations: self.triples.len(),
            entities: self.entities.len(),
            tweets: count(EntityKind::Tweet),
            users: count(EntityKind::User),
            hashtags: count(EntityKind::Hashtag),
            topics: count(EntityKind::Topic),
            keywords: count(EntityKind::Keyword),
            events: count(EntityKind::Event),
            dates: count(EntityKind::Date),
        }
    }
}
