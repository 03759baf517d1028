//! TransD translational embedding with an optional FocusE weighting layer.
//!
//! Entities live in `Rⁿ` with a value vector `v` and projection vector `v_p`;
//! relations live in `Rᵐ` with `r` and `r_p`. An entity is mapped into a
//! relation's space by `M = r_p v_pᵀ + I^{m×n}`, applied without forming `M`.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{EntityRef, KnowledgeGraph, RelationType, Triple};
use crate::scalar::{dot, norm};
use crate::Scalar;

pub const MODEL_MAGIC: &[u8] = b"covkg-transd v1\n";
const MAX_CORRUPTION_TRIES: usize = 100;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("graph has no facts")]
    EmptyGraph,
    #[error("training split is empty")]
    EmptyTrain,
    #[error("not a model file")]
    BadMagic,
    #[error("model file is truncated or malformed: {0}")]
    Truncated(String),
    #[error("model does not embed relation {0}")]
    UnknownRelation(RelationType),
    #[error("model entity table does not match the graph")]
    GraphMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams<T> {
    /// Entity-space dimension.
    pub n: usize,
    /// Relation-space dimension.
    pub m: usize,
    pub margin: T,
    pub beta: T,
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl<T: Scalar> Default for EmbeddingParams<T> {
    fn default() -> Self {
        EmbeddingParams {
            n: 64,
            m: 64,
            margin: T::lit(0.2),
            beta: T::lit(0.5),
            learning_rate: T::lit(1.0),
            epochs: 15,
            batch_size: 1024,
            seed: 0,
            train_fraction: 0.95,
        }
    }
}

impl<T: Scalar> EmbeddingParams<T> {
    // negated comparisons so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |s: &str| Err(EmbeddingError::Params(s.to_string()));
        if self.n < 1 || self.m < 1 {
            return bad("dimensions must be at least 1");
        }
        if !(self.margin > T::zero()) {
            return bad("margin must be positive");
        }
        if !(self.beta >= T::zero() && self.beta <= T::one()) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.learning_rate > T::zero()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Whether scores pass through the FocusE modulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// `h = g`.
    Plain,
    /// `h = α·g`.
    FocusE,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransD<T> {
    pub params: EmbeddingParams<T>,
    /// Entity table; row `i` embeds graph entity `i`.
    pub entities: Vec<EntityRef>,
    /// Embedded relations, in `RelationType::ALL` order.
    pub relations: Vec<RelationType>,
    pub ent: Vec<T>,
    pub ent_p: Vec<T>,
    pub rel: Vec<T>,
    pub rel_p: Vec<T>,
}

/// A triplet in model coordinates; `relation` indexes `TransD::relations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<T> {
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
    /// Edge weight; 1 for unweighted relations.
    pub weight: T,
}

/// `e⊥ = r_p (v_p·v) + pad_or_truncate(v, m)`.
pub fn project<T: Scalar>(v: &[T], v_p: &[T], r_p: &[T]) -> Vec<T> {
    let s = dot(v_p, v);
    r_p.iter().enumerate().map(|(i, &rp)| rp * s + v.get(i).copied().unwrap_or_else(T::zero)).collect()
}

/// `f = −‖h⊥ + r − t⊥‖²`.
pub fn score_f<T: Scalar>(h_perp: &[T], r: &[T], t_perp: &[T]) -> T {
    -h_perp
        .iter()
        .zip(r)
        .zip(t_perp)
        .map(|((&h, &r), &t)| (h + r - t) * (h + r - t))
        .fold(T::zero(), |a, x| a + x)
}

/// Softplus `ln(1 + eᶠ)`, stable for large `|f|`.
pub fn score_g<T: Scalar>(f: T) -> T {
    if f > T::lit(30.0) {
        f + (-f).exp()
    } else {
        f.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(f: T) -> T {
    if f >= T::zero() {
        T::one() / (T::one() + (-f).exp())
    } else {
        let e = f.exp();
        e / (T::one() + e)
    }
}

/// FocusE modulating factor.
pub fn focus_alpha<T: Scalar>(w: T, beta: T, positive: bool) -> T {
    let one = T::one();
    if positive {
        beta + (one - w) * (one - beta)
    } else {
        beta + w * (one - beta)
    }
}

/// Relation-space distances plus the pieces the gradient needs.
struct Forward<T> {
    h_perp: Vec<T>,
    t_perp: Vec<T>,
    f: T,
}

impl<T: Scalar> TransD<T> {
    fn e(&self, i: usize) -> &[T] {
        &self.ent[i * self.params.n..(i + 1) * self.params.n]
    }

    fn ep(&self, i: usize) -> &[T] {
        &self.ent_p[i * self.params.n..(i + 1) * self.params.n]
    }

    fn r(&self, j: usize) -> &[T] {
        &self.rel[j * self.params.m..(j + 1) * self.params.m]
    }

    fn rp(&self, j: usize) -> &[T] {
        &self.rel_p[j * self.params.m..(j + 1) * self.params.m]
    }

    pub fn entity_value(&self, i: usize) -> &[T] {
        self.e(i)
    }

    pub fn relation_value(&self, j: usize) -> &[T] {
        self.r(j)
    }

    pub fn relation_slot(&self, relation: RelationType) -> Option<usize> {
        self.relations.iter().position(|&r| r == relation)
    }

    fn forward(&self, head: usize, tail: usize, relation: usize) -> Forward<T> {
        let rp = self.rp(relation);
        let h_perp = project(self.e(head), self.ep(head), rp);
        let t_perp = project(self.e(tail), self.ep(tail), rp);
        let f = score_f(&h_perp, self.r(relation), &t_perp);
        Forward { h_perp, t_perp, f }
    }

    /// `‖h⊥ + r − t⊥‖²`.
    pub fn distance(&self, head: usize, relation: usize, tail: usize) -> T {
        -self.forward(head, tail, relation).f
    }

    /// Final score of a triplet: `g`, or `α·g` under FocusE.
    pub fn score_h(&self, x: &Triplet<T>, positive: bool, layer: Layer) -> T {
        let g = score_g(self.forward(x.head, x.tail, x.relation).f);
        match layer {
            Layer::Plain => g,
            Layer::FocusE => focus_alpha(x.weight, self.params.beta, positive) * g,
        }
    }

    /// Checks that the model was built over this graph's entity table.
    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<(), EmbeddingError> {
        if self.entities.len() != graph.entity_count()
            || self.entities.iter().enumerate().any(|(i, e)| graph.entity(i) != e)
        {
            return Err(EmbeddingError::GraphMismatch);
        }
        Ok(())
    }
}

fn uniform_block<T: Scalar, R: Rng>(rng: &mut R, len: usize, dim: usize) -> Vec<T> {
    let bound = 6.0 / (dim as f64).sqrt();
    (0..len).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let n = norm(v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x = *x / n);
    }
}

fn clip<T: Scalar>(v: &mut [T]) {
    let n = norm(v);
    if n > T::one() {
        v.iter_mut().for_each(|x| *x = *x / n);
    }
}

/// Seeded initialization over every entity of `graph` and every relation
/// type that has at least one fact.
pub fn init_model<T: Scalar>(
    graph: &KnowledgeGraph,
    params: &EmbeddingParams<T>,
) -> Result<TransD<T>, EmbeddingError> {
    params.validate()?;
    if graph.entity_count() == 0 {
        return Err(EmbeddingError::EmptyGraph);
    }
    let (n, m) = (params.n, params.m);
    let entities: Vec<EntityRef> = (0..graph.entity_count()).map(|i| graph.entity(i).clone()).collect();
    let relations: Vec<RelationType> =
        RelationType::ALL.into_iter().filter(|&r| !graph.facts_with_relation(r).is_empty()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ent = Vec::with_capacity(entities.len() * n);
    let mut ent_p = Vec::with_capacity(entities.len() * n);
    for _ in 0..entities.len() {
        let mut v = uniform_block::<T, _>(&mut rng, n, n);
        normalize(&mut v);
        ent.extend(v);
        ent_p.extend(uniform_block::<T, _>(&mut rng, n, n));
    }
    let mut rel = Vec::with_capacity(relations.len() * m);
    let mut rel_p = Vec::with_capacity(relations.len() * m);
    for _ in 0..relations.len() {
        let mut v = uniform_block::<T, _>(&mut rng, m, m);
        normalize(&mut v);
        rel.extend(v);
        rel_p.extend(uniform_block::<T, _>(&mut rng, m, m));
    }
    Ok(TransD { params: params.clone(), entities, relations, ent, ent_p, rel, rel_p })
}

/// Per-relation Bernoulli sampling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerStats {
    /// Indexed by `RelationType::index()`: (tails per head, heads per tail).
    pub per_relation: [(f64, f64); 11],
}

impl SamplerStats {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let mut per_relation = [(0.0, 0.0); 11];
        for r in RelationType::ALL {
            let facts = graph.facts_with_relation(r);
            if facts.is_empty() {
                continue;
            }
            let mut heads = std::collections::HashSet::new();
            let mut tails = std::collections::HashSet::new();
            for &i in facts {
                heads.insert(graph.triples()[i].head);
                tails.insert(graph.triples()[i].tail);
            }
            let k = facts.len() as f64;
            per_relation[r.index()] = (k / heads.len() as f64, k / tails.len() as f64);
        }
        SamplerStats { per_relation }
    }

    /// Probability of corrupting the head.
    pub fn head_probability(&self, relation: RelationType) -> f64 {
        let (tph, hpt) = self.per_relation[relation.index()];
        if tph + hpt == 0.0 {
            0.5
        } else {
            tph / (tph + hpt)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

/// Replaces the chosen side with a uniformly drawn entity of the same kind
/// until the triple is not a known fact. `None` after too many collisions
/// or when the kind has fewer than two entities.
pub fn corrupt_side<R: Rng>(
    triple: &Triple,
    side: Side,
    graph: &KnowledgeGraph,
    rng: &mut R,
) -> Option<Triple> {
    let (head_kind, tail_kind) = triple.relation.signature();
    let pool = graph.entities_of_kind(match side {
        Side::Head => head_kind,
        Side::Tail => tail_kind,
    });
    if pool.len() < 2 {
        return None;
    }
    for _ in 0..MAX_CORRUPTION_TRIES {
        let e = pool[rng.random_range(0..pool.len())];
        let mut out = *triple;
        match side {
            Side::Head => out.head = e,
            Side::Tail => out.tail = e,
        }
        if !graph.contains(out.head, out.tail, out.relation) {
            return Some(out);
        }
    }
    None
}

/// Bernoulli negative sampling; the negative keeps the positive's weight.
pub fn sample_negative<R: Rng>(
    triple: &Triple,
    graph: &KnowledgeGraph,
    stats: &SamplerStats,
    rng: &mut R,
) -> Option<Triple> {
    let side =
        if rng.random::<f64>() < stats.head_probability(triple.relation) { Side::Head } else { Side::Tail };
    corrupt_side(triple, side, graph, rng)
}

/// Sparse gradient: rows keyed by entity or relation index, each holding
/// (value, projection) partials.
#[derive(Debug, Clone, Default)]
pub struct Gradient<T> {
    pub entities: HashMap<usize, (Vec<T>, Vec<T>)>,
    pub relations: HashMap<usize, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradient<T> {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    fn entity_row(&mut self, i: usize, n: usize) -> &mut (Vec<T>, Vec<T>) {
        self.entities.entry(i).or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]))
    }

    fn relation_row(&mut self, j: usize, m: usize) -> &mut (Vec<T>, Vec<T>) {
        self.relations.entry(j).or_insert_with(|| (vec![T::zero(); m], vec![T::zero(); m]))
    }
}

impl<T: Scalar> TransD<T> {
    /// Adds `coef · ∂f/∂θ` for one triplet.
    fn accumulate(&self, x: &Triplet<T>, fw: &Forward<T>, coef: T, grad: &mut Gradient<T>) {
        let (n, m) = (self.params.n, self.params.m);
        let two = T::lit(2.0);
        // ∂f/∂d = −2d with d = h⊥ + r − t⊥, pre-scaled by coef
        let r = self.r(x.relation);
        let gd: Vec<T> = (0..m).map(|i| -two * (fw.h_perp[i] + r[i] - fw.t_perp[i]) * coef).collect();
        let rp = self.rp(x.relation);
        let rp_gd = dot(rp, &gd);
        let (h, hp, t, tp) = (self.e(x.head), self.ep(x.head), self.e(x.tail), self.ep(x.tail));
        let hp_h = dot(hp, h);
        let tp_t = dot(tp, t);

        {
            let (gv, gp) = grad.entity_row(x.head, n);
            for k in 0..n {
                let pad = if k < m { gd[k] } else { T::zero() };
                gv[k] = gv[k] + hp[k] * rp_gd + pad;
                gp[k] = gp[k] + rp_gd * h[k];
            }
        }
        {
            let (gv, gp) = grad.entity_row(x.tail, n);
            for k in 0..n {
                let pad = if k < m { gd[k] } else { T::zero() };
                gv[k] = gv[k] - (tp[k] * rp_gd + pad);
                gp[k] = gp[k] - rp_gd * t[k];
            }
        }
        let (gr, grp) = grad.relation_row(x.relation, m);
        for k in 0..m {
            gr[k] = gr[k] + gd[k];
            grp[k] = grp[k] + gd[k] * (hp_h - tp_t);
        }
    }

    /// Hinge term `[γ + h(ξ′) − h(ξ)]₊` for one pair, adding its gradient
    /// to `grad` when the hinge is active.
    pub fn pair_loss(
        &self,
        pos: &Triplet<T>,
        neg: &Triplet<T>,
        layer: Layer,
        grad: Option<&mut Gradient<T>>,
    ) -> T {
        let fp = self.forward(pos.head, pos.tail, pos.relation);
        let fnn = self.forward(neg.head, neg.tail, neg.relation);
        let (ap, an) = match layer {
            Layer::Plain => (None, None),
            Layer::FocusE => (
                Some(focus_alpha(pos.weight, self.params.beta, true)),
                Some(focus_alpha(neg.weight, self.params.beta, false)),
            ),
        };
        let scaled = |a: Option<T>, v: T| a.map_or(v, |a| a * v);
        let hp = scaled(ap, score_g(fp.f));
        let hn = scaled(an, score_g(fnn.f));
        let term = self.params.margin + hn - hp;
        if term <= T::zero() {
            return T::zero();
        }
        if let Some(grad) = grad {
            // dh/df = α·σ(f)
            self.accumulate(neg, &fnn, scaled(an, sigmoid(fnn.f)), grad);
            self.accumulate(pos, &fp, -scaled(ap, sigmoid(fp.f)), grad);
        }
        term
    }

    /// Summed loss and gradient over a batch of (positive, negative) pairs.
    pub fn batch_loss_and_gradient(
        &self,
        pairs: &[(Triplet<T>, Triplet<T>)],
        layer: Layer,
    ) -> (T, Gradient<T>) {
        let mut grad = Gradient::default();
        let loss =
            pairs.iter().fold(T::zero(), |acc, (p, q)| acc + self.pair_loss(p, q, layer, Some(&mut grad)));
        (loss, grad)
    }

    /// `θ ← θ − lr·∇`, then rescales every touched vector, value and
    /// projection, to norm ≤ 1.
    pub fn apply_gradient(&mut self, grad: &Gradient<T>) {
        let (n, m, lr) = (self.params.n, self.params.m, self.params.learning_rate);
        for (&i, (gv, gp)) in &grad.entities {
            let v = &mut self.ent[i * n..(i + 1) * n];
            v.iter_mut().zip(gv).for_each(|(x, &g)| *x = *x - lr * g);
            clip(v);
            let p = &mut self.ent_p[i * n..(i + 1) * n];
            p.iter_mut().zip(gp).for_each(|(x, &g)| *x = *x - lr * g);
            clip(p);
        }
        for (&j, (gv, gp)) in &grad.relations {
            let v = &mut self.rel[j * m..(j + 1) * m];
            v.iter_mut().zip(gv).for_each(|(x, &g)| *x = *x - lr * g);
            clip(v);
            let p = &mut self.rel_p[j * m..(j + 1) * m];
            p.iter_mut().zip(gp).for_each(|(x, &g)| *x = *x - lr * g);
            clip(p);
        }
    }

    fn triplet(&self, t: &Triple) -> Triplet<T> {
        Triplet {
            head: t.head,
            tail: t.tail,
            relation: self.relation_slot(t.relation).expect("relation embedded at init"),
            weight: T::lit(t.weight.unwrap_or(1.0)),
        }
    }
}

/// Mean hinge loss per positive for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss<T> {
    pub train: T,
    pub validation: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: TransD<T>,
    pub losses: Vec<EpochLoss<T>>,
    pub train_facts: usize,
    pub validation_facts: usize,
    /// Positives dropped because no corruption was found.
    pub skipped: usize,
}

/// Splits, shuffles and trains with minibatch SGD. All randomness flows
/// from `params.seed`.
pub fn train<T: Scalar>(
    graph: &KnowledgeGraph,
    params: &EmbeddingParams<T>,
    layer: Layer,
) -> Result<TrainOutcome<T>, EmbeddingError> {
    params.validate()?;
    if graph.fact_count() == 0 {
        return Err(EmbeddingError::EmptyGraph);
    }
    let mut model = init_model(graph, params)?;
    let stats = SamplerStats::from_graph(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_0001);

    let mut order: Vec<usize> = (0..graph.fact_count()).collect();
    order.shuffle(&mut rng);
    let n_train = ((order.len() as f64 * params.train_fraction).round() as usize).min(order.len());
    if n_train == 0 {
        return Err(EmbeddingError::EmptyTrain);
    }
    let (train_set, valid_set) = order.split_at(n_train);
    let mut train_set = train_set.to_vec();
    let triples = graph.triples();

    let mut losses = Vec::with_capacity(params.epochs);
    let mut skipped = 0;
    for epoch in 0..params.epochs {
        train_set.shuffle(&mut rng);
        let mut total = T::zero();
        let mut used = 0usize;
        for batch in train_set.chunks(params.batch_size) {
            let mut pairs = Vec::with_capacity(batch.len());
            for &i in batch {
                match sample_negative(&triples[i], graph, &stats, &mut rng) {
                    Some(neg) => pairs.push((model.triplet(&triples[i]), model.triplet(&neg))),
                    None => skipped += 1,
                }
            }
            used += pairs.len();
            let (loss, grad) = model.batch_loss_and_gradient(&pairs, layer);
            total = total + loss;
            model.apply_gradient(&grad);
        }
        let train_loss = if used > 0 { total / T::lit(used as f64) } else { T::zero() };
        let validation = validation_loss(&model, graph, &stats, valid_set, layer, params.seed);
        log::debug!("epoch {}: train {train_loss} validation {validation}", epoch + 1);
        losses.push(EpochLoss { train: train_loss, validation });
    }
    if skipped > 0 {
        log::warn!("{skipped} positives had no valid corruption and were skipped");
    }
    Ok(TrainOutcome { model, losses, train_facts: n_train, validation_facts: valid_set.len(), skipped })
}

// Same negatives every epoch so that the trace is comparable across epochs.
fn validation_loss<T: Scalar>(
    model: &TransD<T>,
    graph: &KnowledgeGraph,
    stats: &SamplerStats,
    facts: &[usize],
    layer: Layer,
    seed: u64,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let mut total = T::zero();
    let mut used = 0usize;
    for &i in facts {
        let pos = &graph.triples()[i];
        if let Some(neg) = sample_negative(pos, graph, stats, &mut rng) {
            total = total + model.pair_loss(&model.triplet(pos), &model.triplet(&neg), layer, None);
            used += 1;
        }
    }
    if used > 0 {
        total / T::lit(used as f64)
    } else {
        T::zero()
    }
}

fn put_u64<W: Write>(out: &mut W, v: u64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(out: &mut W, v: f64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(out: &mut W, s: &str) -> std::io::Result<()> {
    put_u64(out, s.len() as u64)?;
    out.write_all(s.as_bytes())
}

/// Writes magic, header, id tables, then all vectors as little-endian f64.
pub fn save_model<T: Scalar, W: Write>(model: &TransD<T>, mut out: W) -> Result<(), EmbeddingError> {
    let p = &model.params;
    out.write_all(MODEL_MAGIC)?;
    for v in [p.n, p.m, p.epochs, p.batch_size] {
        put_u64(&mut out, v as u64)?;
    }
    put_u64(&mut out, p.seed)?;
    for v in [p.margin, p.beta, p.learning_rate] {
        put_f64(&mut out, v.to_f64_lossless())?;
    }
    put_f64(&mut out, p.train_fraction)?;
    put_u64(&mut out, model.entities.len() as u64)?;
    put_u64(&mut out, model.relations.len() as u64)?;
    for e in &model.entities {
        put_str(&mut out, &e.to_string())?;
    }
    for r in &model.relations {
        put_str(&mut out, r.as_str())?;
    }
    for i in 0..model.entities.len() {
        for &x in model.e(i).iter().chain(model.ep(i)) {
            put_f64(&mut out, x.to_f64_lossless())?;
        }
    }
    for j in 0..model.relations.len() {
        for &x in model.r(j).iter().chain(model.rp(j)) {
            put_f64(&mut out, x.to_f64_lossless())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], EmbeddingError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| EmbeddingError::Truncated(e.to_string()))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64, EmbeddingError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize, EmbeddingError> {
        usize::try_from(self.u64()?).map_err(|e| EmbeddingError::Truncated(e.to_string()))
    }

    fn f64(&mut self) -> Result<f64, EmbeddingError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String, EmbeddingError> {
        let len = self.usize()?;
        if len > 1 << 20 {
            return Err(EmbeddingError::Truncated(format!("implausible string length {len}")));
        }
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| EmbeddingError::Truncated(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| EmbeddingError::Truncated(e.to_string()))
    }

    fn block<T: Scalar>(&mut self, len: usize) -> Result<Vec<T>, EmbeddingError> {
        (0..len).map(|_| self.f64().map(T::lit)).collect()
    }
}

pub fn load_model<T: Scalar, R: Read>(input: R) -> Result<TransD<T>, EmbeddingError> {
    let mut rd = Reader { inner: input };
    let mut magic = vec![0u8; MODEL_MAGIC.len()];
    rd.inner.read_exact(&mut magic).map_err(|_| EmbeddingError::BadMagic)?;
    if magic != MODEL_MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let (n, m, epochs, batch_size) = (rd.usize()?, rd.usize()?, rd.usize()?, rd.usize()?);
    let seed = rd.u64()?;
    let (margin, beta, learning_rate) = (rd.f64()?, rd.f64()?, rd.f64()?);
    let train_fraction = rd.f64()?;
    let params = EmbeddingParams {
        n,
        m,
        margin: T::lit(margin),
        beta: T::lit(beta),
        learning_rate: T::lit(learning_rate),
        epochs,
        batch_size,
        seed,
        train_fraction,
    };
    params.validate().map_err(|e| EmbeddingError::Truncated(e.to_string()))?;
    let (ne, nr) = (rd.usize()?, rd.usize()?);
    let entities = (0..ne)
        .map(|_| {
            let s = rd.string()?;
            s.parse::<EntityRef>().map_err(|e| EmbeddingError::Truncated(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let relations = (0..nr)
        .map(|_| {
            let s = rd.string()?;
            s.parse::<RelationType>().map_err(|e| EmbeddingError::Truncated(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mut ent, mut ent_p) = (Vec::with_capacity(ne * n), Vec::with_capacity(ne * n));
    for _ in 0..ne {
        ent.extend(rd.block::<T>(n)?);
        ent_p.extend(rd.block::<T>(n)?);
    }
    let (mut rel, mut rel_p) = (Vec::with_capacity(nr * m), Vec::with_capacity(nr * m));
    for _ in 0..nr {
        rel.extend(rd.block::<T>(m)?);
        rel_p.extend(rd.block::<T>(m)?);
    }
    let mut rest = [0u8; 1];
    if rd.inner.read(&mut rest)? != 0 {
        return Err(EmbeddingError::Truncated("trailing bytes".into()));
    }
    Ok(TransD { params, entities, relations, ent, ent_p, rel, rel_p })
}
