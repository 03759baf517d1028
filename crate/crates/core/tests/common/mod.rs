#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use covkg::embedding::{EmbeddingParams, Layer, TransD, Triplet};
use covkg::graph::{EntityKind, EntityRef, Fact, KnowledgeGraph, RelationType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn day(i: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 11).unwrap() + Duration::days(i)
}

fn ent(kind: EntityKind, id: impl Into<String>) -> EntityRef {
    EntityRef::new(kind, id).unwrap()
}

fn add(g: &mut KnowledgeGraph, f: Fact) {
    g.ensure_entity(&f.head);
    g.ensure_entity(&f.tail);
    g.add_fact(&f).unwrap();
}

/// Mixed weighted/unweighted graph with exactly `target` facts.
pub fn synthetic_graph(seed: u64, target: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = KnowledgeGraph::new();
    let topics: Vec<_> = (0..10).map(|i| ent(EntityKind::Topic, format!("topic-{i}"))).collect();
    let words: Vec<_> = (0..30).map(|i| ent(EntityKind::Keyword, format!("word{i}"))).collect();
    for (i, t) in topics.iter().enumerate() {
        for k in 0..3 {
            let w = &words[(i * 3 + k) % words.len()];
            add(
                &mut g,
                Fact::weighted(w.clone(), RelationType::AssociatedWith, t.clone(), 1.0 / (k + 1) as f64),
            );
        }
        add(
            &mut g,
            Fact::new(t.clone(), RelationType::HasChangepoint, EntityRef::date(day(rng.random_range(0..30)))),
        );
    }
    let mut tweet = 0u64;
    while g.fact_count() < target {
        tweet += 1;
        let tw = ent(EntityKind::Tweet, tweet.to_string());
        let facts = [
            Fact::new(
                tw.clone(),
                RelationType::AuthoredBy,
                ent(EntityKind::User, rng.random_range(0..25u32).to_string()),
            ),
            Fact::new(tw.clone(), RelationType::TweetedOn, EntityRef::date(day(rng.random_range(0..30)))),
            Fact::weighted(
                tw.clone(),
                RelationType::HasTopic,
                topics[rng.random_range(0..10)].clone(),
                rng.random_range(0.5..1.0),
            ),
            Fact::weighted(
                tw.clone(),
                RelationType::HasKeyword,
                words[rng.random_range(0..30)].clone(),
                rng.random_range(0.0..1.0),
            ),
        ];
        for f in facts {
            if g.fact_count() < target {
                add(&mut g, f);
            }
        }
    }
    g
}

pub type Pair = (Triplet<f64>, Triplet<f64>);
type Field = fn(&mut TransD<f64>) -> &mut Vec<f64>;

/// Random small model with hand-picked dimensions, plus random pairs.
pub fn random_instance(
    seed: u64,
    n: usize,
    m: usize,
    entities: usize,
    relations: usize,
    pairs: usize,
) -> (TransD<f64>, Vec<Pair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-0.8..0.8)).collect() };
    let params =
        EmbeddingParams { n, m, margin: 1.0, beta: 0.0, learning_rate: 0.1, ..EmbeddingParams::default() };
    let mut model = TransD {
        params,
        entities: (0..entities).map(|i| ent(EntityKind::Tweet, i.to_string())).collect(),
        relations: RelationType::ALL[..relations].to_vec(),
        ent: draw(entities * n),
        ent_p: draw(entities * n),
        rel: draw(relations * m),
        rel_p: draw(relations * m),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    model.params.beta = rng.random_range(0.0..1.0);
    let mut triplet = |w: f64| Triplet {
        head: rng.random_range(0..entities),
        tail: rng.random_range(0..entities),
        relation: rng.random_range(0..relations),
        weight: w,
    };
    let out = (0..pairs)
        .map(|k| {
            let w = (k as f64 + 0.5) / pairs as f64;
            (triplet(w), triplet(w))
        })
        .collect();
    (model, out)
}

fn total_loss(model: &TransD<f64>, pairs: &[Pair], layer: Layer) -> f64 {
    pairs.iter().map(|(p, q)| model.pair_loss(p, q, layer, None)).sum()
}

/// Largest relative error between analytic and central-difference partials
/// over every parameter of the model.
pub fn max_gradient_error(model: &TransD<f64>, pairs: &[Pair], layer: Layer, eps: f64) -> f64 {
    let (_, grad) = model.batch_loss_and_gradient(pairs, layer);
    let (n, m) = (model.params.n, model.params.m);
    let mut worst = 0.0f64;
    let blocks: [(Field, usize); 4] =
        [(|x| &mut x.ent, n), (|x| &mut x.ent_p, n), (|x| &mut x.rel, m), (|x| &mut x.rel_p, m)];
    for (b, (field, dim)) in blocks.into_iter().enumerate() {
        let mut probe = model.clone();
        let len = field(&mut probe).len();
        for k in 0..len {
            let (row, col) = (k / dim, k % dim);
            let analytic = match b {
                0 => grad.entities.get(&row).map_or(0.0, |g| g.0[col]),
                1 => grad.entities.get(&row).map_or(0.0, |g| g.1[col]),
                2 => grad.relations.get(&row).map_or(0.0, |g| g.0[col]),
                _ => grad.relations.get(&row).map_or(0.0, |g| g.1[col]),
            };
            let orig = field(&mut probe)[k];
            field(&mut probe)[k] = orig + eps;
            let up = total_loss(&probe, pairs, layer);
            field(&mut probe)[k] = orig - eps;
            let down = total_loss(&probe, pairs, layer);
            field(&mut probe)[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

pub fn tweet(i: usize) -> EntityRef {
    EntityRef::new(EntityKind::Tweet, i.to_string()).unwrap()
}

pub fn graph_from_edges(nodes: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for i in 0..nodes {
        g.ensure_entity(&tweet(i));
    }
    for &(a, b) in edges {
        g.add_fact(&Fact::new(tweet(a), RelationType::RepliesTo, tweet(b))).unwrap();
    }
    g
}

pub fn clique(nodes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, &a) in nodes.iter().enumerate() {
        for &b in &nodes[k + 1..] {
            out.push((b, a));
        }
    }
    out
}

// Direct evaluation from the edge list: Σ_c (e_c/E − (d_c/2E)²).
pub fn oracle_q(nodes: usize, edges: &[(usize, usize)], community: &[usize]) -> f64 {
    let e = edges.len() as f64;
    if e == 0.0 {
        return 0.0;
    }
    let k = community.iter().max().unwrap() + 1;
    let mut inside = vec![0.0; k];
    let mut deg = vec![0.0; k];
    for &(a, b) in edges {
        deg[community[a]] += 1.0;
        deg[community[b]] += 1.0;
        if community[a] == community[b] {
            inside[community[a]] += 1.0;
        }
    }
    assert_eq!(community.len(), nodes);
    (0..k).map(|c| inside[c] / e - (deg[c] / (2.0 * e)).powi(2)).sum()
}

// All set partitions as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur[i] = c;
            rec(i + 1, max.max(c), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

pub fn two_cliques_with_bridge() -> Vec<(usize, usize)> {
    let mut e = clique(&[0, 1, 2, 3]);
    e.extend(clique(&[4, 5, 6, 7]));
    e.push((4, 3));
    e
}

// Two-pass segment cost, computed directly from the samples.
pub fn direct_cost(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

pub fn objective(y: &[f64], boundaries: &[usize], penalty: f64) -> f64 {
    let mut start = 0;
    let mut total = 0.0;
    for &end in boundaries {
        total += direct_cost(&y[start..end]);
        start = end;
    }
    total + penalty * (boundaries.len() as f64 - 1.0)
}

// Optimal partitioning, quadratic in n: minimal penalized cost and the
// segment ends that achieve it.
pub fn oracle_segmentation(y: &[f64], penalty: f64) -> (f64, Vec<usize>) {
    let n = y.len();
    let mut f = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -penalty;
    for t in 1..=n {
        for s in 0..t {
            let c = f[s] + direct_cost(&y[s..t]) + penalty;
            if c < f[t] {
                f[t] = c;
                last[t] = s;
            }
        }
    }
    let mut ends = Vec::new();
    let mut t = n;
    while t > 0 {
        ends.push(t);
        t = last[t];
    }
    ends.reverse();
    (f[n], ends)
}

pub fn oracle(y: &[f64], penalty: f64) -> f64 {
    oracle_segmentation(y, penalty).0
}
