//! Link prediction from a trained embedding and Louvain communities.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingError, TransD};
use crate::graph::{EntityKind, EntityRef, KnowledgeGraph, RelationType};
use crate::Scalar;

pub const DEFAULT_PERCENTILE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedLink<T> {
    pub head: EntityRef,
    pub relation: RelationType,
    pub tail: EntityRef,
    /// `‖h⊥ + r − t⊥‖²`.
    pub distance: T,
    /// Rank among all of the head's candidates as a percentage (best of 100 → 1).
    pub percentile: f64,
}

/// Number of predictions kept per head.
pub fn prediction_count(percentile: f64, candidates: usize) -> usize {
    ((percentile / 100.0 * candidates as f64).floor() as usize).max(1)
}

/// For each head, ranks every candidate tail by distance (ties by entity
/// index) and returns the best `max(1, ⌊p/100·|tails|⌋)` that are not
/// already facts.
pub fn predict_links<T: Scalar>(
    model: &TransD<T>,
    graph: &KnowledgeGraph,
    relation: RelationType,
    heads: &[usize],
    tails: &[usize],
    percentile: f64,
) -> Result<Vec<PredictedLink<T>>, EmbeddingError> {
    let slot = model.relation_slot(relation).ok_or(EmbeddingError::UnknownRelation(relation))?;
    model.check_graph(graph)?;
    let k = prediction_count(percentile, tails.len());
    let mut out = Vec::new();
    for &h in heads {
        let mut ranked: Vec<(T, usize)> = tails.iter().map(|&t| (model.distance(h, slot, t), t)).collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        out.extend(
            ranked.iter().enumerate().filter(|&(_, &(_, t))| !graph.contains(h, t, relation)).take(k).map(
                |(rank, &(d, t))| PredictedLink {
                    head: graph.entity(h).clone(),
                    relation,
                    tail: graph.entity(t).clone(),
                    distance: d,
                    percentile: 100.0 * (rank + 1) as f64 / tails.len() as f64,
                },
            ),
        );
    }
    Ok(out)
}

pub fn write_predictions<T: Scalar, W: Write>(links: &[PredictedLink<T>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "head,relation,tail,distance,percentile")?;
    for l in links {
        writeln!(out, "{},{},{},{},{}", l.head, l.relation, l.tail, l.distance, l.percentile)?;
    }
    out.flush()
}

/// Undirected simple graph with integer edge weights; self-loop weight is
/// stored once and counts twice towards the degree.
#[derive(Debug, Clone)]
struct WeightedGraph {
    adj: Vec<Vec<(usize, u64)>>,
    self_loops: Vec<u64>,
}

impl WeightedGraph {
    fn from_knowledge_graph(graph: &KnowledgeGraph) -> Self {
        let n = graph.entity_count();
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for t in graph.triples() {
            if t.head != t.tail {
                sets[t.head].insert(t.tail);
                sets[t.tail].insert(t.head);
            }
        }
        WeightedGraph {
            adj: sets.into_iter().map(|s| s.into_iter().map(|v| (v, 1)).collect()).collect(),
            self_loops: vec![0; n],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, i: usize) -> u64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<u64>() + 2 * self.self_loops[i]
    }

    fn total_weight2(&self) -> u64 {
        (0..self.len()).map(|i| self.degree(i)).sum()
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Self {
        let mut edges: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); count];
        let mut self_loops = vec![0u64; count];
        for i in 0..self.len() {
            let ci = community[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = community[j];
                if ci == cj {
                    // each internal edge is seen from both ends
                    if i < j {
                        self_loops[ci] += w;
                    }
                } else {
                    *edges[ci].entry(cj).or_default() += w;
                }
            }
        }
        WeightedGraph { adj: edges.into_iter().map(|e| e.into_iter().collect()).collect(), self_loops }
    }
}

/// Relabels to dense ids in order of first appearance.
fn renumber(community: &mut [usize]) -> usize {
    let mut map = HashMap::new();
    for c in community.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Local moving until no node improves. Returns whether anything moved.
fn local_moves(g: &WeightedGraph, community: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let m2 = g.total_weight2() as i128;
    if m2 == 0 {
        return false;
    }
    let degree: Vec<i128> = (0..g.len()).map(|i| g.degree(i) as i128).collect();
    let mut tot = vec![0i128; g.len()];
    for i in 0..g.len() {
        tot[community[i]] += degree[i];
    }
    let mut order: Vec<usize> = (0..g.len()).collect();
    let mut moved_any = false;
    loop {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let old = community[i];
            let ki = degree[i];
            tot[old] -= ki;
            let mut links: BTreeMap<usize, i128> = BTreeMap::new();
            links.insert(old, 0);
            for &(j, w) in &g.adj[i] {
                *links.entry(community[j]).or_default() += w as i128;
            }
            let gain = |c: usize, kin: i128| m2 * kin - tot[c] * ki;
            let old_gain = gain(old, links[&old]);
            let mut best = (old_gain, old);
            for (&c, &kin) in &links {
                let gc = gain(c, kin);
                // ascending community order: strict `>` keeps the lowest id on ties
                if gc > best.0 {
                    best = (gc, c);
                }
            }
            let target = if best.0 > old_gain { best.1 } else { old };
            tot[target] += ki;
            if target != old {
                community[i] = target;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

/// Node → community, dense ids from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub community: Vec<usize>,
}

impl Partition {
    pub fn count(&self) -> usize {
        self.community.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count()];
        for (i, &c) in self.community.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainResult {
    pub partition: Partition,
    /// Modularity after each level (and after the final refinement, if it moved anything).
    pub trace: Vec<f64>,
}

fn modularity_of(g: &WeightedGraph, community: &[usize]) -> f64 {
    let m2 = g.total_weight2();
    if m2 == 0 {
        return 0.0;
    }
    let count = community.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0u64; count];
    let mut degree = vec![0u64; count];
    for i in 0..g.len() {
        let c = community[i];
        degree[c] += g.degree(i);
        internal[c] += 2 * g.self_loops[i];
        internal[c] += g.adj[i].iter().filter(|&&(j, _)| community[j] == c).map(|&(_, w)| w).sum::<u64>();
    }
    let m2 = m2 as f64;
    (0..count).map(|c| internal[c] as f64 / m2 - (degree[c] as f64 / m2).powi(2)).sum()
}

/// `Q = Σ_c (e_c/E − (d_c/2E)²)` on the undirected simple graph underlying
/// `graph`; 0 when there are no edges.
pub fn modularity(graph: &KnowledgeGraph, partition: &Partition) -> f64 {
    modularity_of(&WeightedGraph::from_knowledge_graph(graph), &partition.community)
}

/// Multilevel Louvain on the undirected, unweighted, untyped simple graph,
/// followed by node-level refinement on the original graph.
pub fn louvain(graph: &KnowledgeGraph, seed: u64) -> LouvainResult {
    let base = WeightedGraph::from_knowledge_graph(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<usize> = (0..base.len()).collect();
    let mut trace = Vec::new();
    let mut level = base.clone();
    loop {
        let mut community: Vec<usize> = (0..level.len()).collect();
        let moved = local_moves(&level, &mut community, &mut rng);
        if !moved {
            break;
        }
        let count = renumber(&mut community);
        for a in assignment.iter_mut() {
            *a = community[*a];
        }
        trace.push(modularity_of(&base, &assignment));
        level = level.aggregate(&community, count);
    }
    if local_moves(&base, &mut assignment, &mut rng) {
        renumber(&mut assignment);
        trace.push(modularity_of(&base, &assignment));
    }
    renumber(&mut assignment);
    if trace.is_empty() {
        trace.push(modularity_of(&base, &assignment));
    }
    LouvainResult { partition: Partition { community: assignment }, trace }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityRow {
    pub community: usize,
    pub tweets: usize,
    pub users: usize,
    pub topics: Vec<String>,
}

pub fn community_report(partition: &Partition, graph: &KnowledgeGraph) -> Vec<CommunityRow> {
    partition
        .members()
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let of = |k: EntityKind| members.iter().filter(move |&&i| graph.entity(i).kind() == k);
            CommunityRow {
                community: c,
                tweets: of(EntityKind::Tweet).count(),
                users: of(EntityKind::User).count(),
                topics: of(EntityKind::Topic).map(|&i| graph.entity(i).id().to_string()).collect(),
            }
        })
        .collect()
}

pub fn write_communities<W: Write>(
    partition: &Partition,
    graph: &KnowledgeGraph,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "entity_kind,entity_id,community")?;
    for (i, &c) in partition.community.iter().enumerate() {
        let e = graph.entity(i);
        writeln!(out, "{},{},{}", e.kind(), e.id(), c)?;
    }
    out.flush()
}

pub fn write_community_report<W: Write>(rows: &[CommunityRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "community,tweets,users,topics")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.community, r.tweets, r.users, r.topics.join(" "))?;
    }
    out.flush()
}
