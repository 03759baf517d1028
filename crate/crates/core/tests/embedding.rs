mod common;

use covkg::embedding::{
    corrupt_side, focus_alpha, init_model, load_model, project, sample_negative, save_model, score_f,
    score_g, train, EmbeddingError, EmbeddingParams, Layer, SamplerStats, Side, TransD, Triplet,
};
use covkg::graph::{EntityKind, EntityRef, Fact, KnowledgeGraph, RelationType};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_params(seed: u64) -> EmbeddingParams<f64> {
    EmbeddingParams { n: 8, m: 6, seed, epochs: 2, ..EmbeddingParams::default() }
}

#[test]
fn init_is_seeded_and_normalized() {
    let g = common::synthetic_graph(1, 200);
    let a = init_model(&g, &small_params(3)).unwrap();
    let b = init_model(&g, &small_params(3)).unwrap();
    let c = init_model(&g, &small_params(4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.ent, c.ent);
    for i in 0..a.entities.len() {
        let norm: f64 = a.entity_value(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    let bound = 6.0 / 8f64.sqrt();
    assert!(a.ent_p.iter().all(|x| x.abs() <= bound));
    assert!(matches!(
        init_model(&g, &EmbeddingParams::<f64> { m: 0, ..small_params(0) }),
        Err(EmbeddingError::Params(_))
    ));
}

#[test]
fn hand_built_two_dimensional_score() {
    // one relation; h = (1,1), h_p = (1,0), r_p = (1,0) → h⊥ = (2,1);
    // t = (0,0) → t⊥ = 0; r = (0,−1) → d = (2,0), f = −4
    let model = TransD {
        params: EmbeddingParams { n: 2, m: 2, beta: 0.5, ..EmbeddingParams::default() },
        entities: vec![
            EntityRef::new(EntityKind::Tweet, "1").unwrap(),
            EntityRef::new(EntityKind::Topic, "topic-0").unwrap(),
        ],
        relations: vec![RelationType::HasTopic],
        ent: vec![1.0, 1.0, 0.0, 0.0],
        ent_p: vec![1.0, 0.0, 0.3, 0.3],
        rel: vec![0.0, -1.0],
        rel_p: vec![1.0, 0.0],
    };
    let x = Triplet { head: 0, tail: 1, relation: 0, weight: 0.4 };
    assert_eq!(project(&[1.0, 1.0], &[1.0, 0.0], &[1.0, 0.0]), [2.0, 1.0]);
    assert_eq!(score_f(&[2.0, 1.0], &[0.0, -1.0], &[0.0, 0.0]), -4.0);
    assert_eq!(model.distance(0, 0, 1), 4.0);
    let g = (1.0 + (-4.0f64).exp()).ln();
    assert!((score_g(-4.0) - g).abs() < 1e-15);
    assert_eq!(model.score_h(&x, true, Layer::Plain), score_g(-4.0));
    // positive: α = 0.5 + 0.6·0.5 = 0.8
    assert!((model.score_h(&x, true, Layer::FocusE) - 0.8 * g).abs() < 1e-15);
    // negative: α = 0.5 + 0.4·0.5 = 0.7
    assert!((model.score_h(&x, false, Layer::FocusE) - 0.7 * g).abs() < 1e-15);
    let perfect = TransD { rel: vec![-2.0, -1.0], ..model.clone() };
    let p = EmbeddingParams { beta: 1.0, ..perfect.params.clone() };
    let perfect = TransD { params: p, ..perfect };
    assert_eq!(perfect.score_h(&x, true, Layer::FocusE), std::f64::consts::LN_2);
}

#[test]
fn score_ranges() {
    for w in [0.0, 0.25, 0.5, 1.0] {
        for beta in [0.0, 0.3, 1.0] {
            for pos in [true, false] {
                let a = focus_alpha(w, beta, pos);
                assert!((beta..=1.0).contains(&a));
            }
        }
    }
    for f in [-1e3, -10.0, -1.0, 0.0] {
        assert!(score_g(f) >= 0.0);
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..10 {
        for (n, m) in [(4, 4), (5, 3), (3, 5)] {
            let (model, pairs) = common::random_instance(seed, n, m, 10, 3, 12);
            for layer in [Layer::Plain, Layer::FocusE] {
                let err = common::max_gradient_error(&model, &pairs, layer, 1e-5);
                assert!(err < 1e-4, "seed {seed} n={n} m={m} {layer:?}: {err}");
            }
        }
    }
}

#[test]
fn inactive_hinge_leaves_model_unchanged() {
    let (mut model, _) = common::random_instance(7, 4, 4, 4, 1, 0);
    model.params.margin = 1e-3;
    // positive: make h⊥ + r = t⊥ exactly; negative far away
    model.ent_p.iter_mut().for_each(|x| *x = 0.0);
    model.rel.iter_mut().for_each(|x| *x = 0.0);
    model.ent[..4].copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
    model.ent[4..8].copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
    model.ent[8..12].copy_from_slice(&[5.0, 5.0, 5.0, 5.0]);
    let pos = Triplet { head: 0, tail: 1, relation: 0, weight: 1.0 };
    let neg = Triplet { head: 0, tail: 2, relation: 0, weight: 1.0 };
    let (loss, grad) = model.batch_loss_and_gradient(&[(pos, neg)], Layer::FocusE);
    assert_eq!(loss, 0.0);
    assert!(grad.is_empty());
    let before = model.clone();
    model.apply_gradient(&grad);
    assert_eq!(model, before);
}

fn one_to_one_graph() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for i in 0..4 {
        let t = EntityRef::new(EntityKind::Tweet, i.to_string()).unwrap();
        let u = EntityRef::new(EntityKind::User, format!("u{i}")).unwrap();
        g.ensure_entity(&t);
        g.ensure_entity(&u);
        g.add_fact(&Fact::new(t, RelationType::AuthoredBy, u)).unwrap();
    }
    g
}

#[test]
fn bernoulli_parameter_for_one_to_one() {
    let g = one_to_one_graph();
    let stats = SamplerStats::from_graph(&g);
    assert_eq!(stats.per_relation[RelationType::AuthoredBy.index()], (1.0, 1.0));
    assert_eq!(stats.head_probability(RelationType::AuthoredBy), 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pos = g.triples()[0];
    let trials = 20_000;
    let heads =
        (0..trials).filter(|_| sample_negative(&pos, &g, &stats, &mut rng).unwrap().head != pos.head).count();
    let rate = heads as f64 / trials as f64;
    assert!((rate - 0.5).abs() < 0.02, "{rate}");
}

#[test]
fn forced_tail_with_single_alternative() {
    let mut g = KnowledgeGraph::new();
    let t = EntityRef::new(EntityKind::Tweet, "1").unwrap();
    let a = EntityRef::new(EntityKind::User, "a").unwrap();
    let b = EntityRef::new(EntityKind::User, "b").unwrap();
    for e in [&t, &a, &b] {
        g.ensure_entity(e);
    }
    g.add_fact(&Fact::new(t, RelationType::AuthoredBy, a)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let neg = corrupt_side(&g.triples()[0], Side::Tail, &g, &mut rng).unwrap();
    assert_eq!(g.entity(neg.tail), &b);
    // the head side has a single tweet: nothing to draw from
    assert!(corrupt_side(&g.triples()[0], Side::Head, &g, &mut rng).is_none());
}

#[test]
fn negatives_are_never_known_facts() {
    let g = common::synthetic_graph(2, 600);
    let stats = SamplerStats::from_graph(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut drawn = 0;
    for k in 0..10_000 {
        let pos = g.triples()[k % g.fact_count()];
        if let Some(neg) = sample_negative(&pos, &g, &stats, &mut rng) {
            assert!(!g.contains(neg.head, neg.tail, neg.relation));
            assert_eq!(neg.weight, pos.weight);
            drawn += 1;
        }
    }
    assert!(drawn > 9_000);
}

#[test]
fn training_reduces_loss() {
    let g = common::synthetic_graph(3, 1000);
    let params = EmbeddingParams::<f64> { n: 16, m: 16, seed: 11, ..EmbeddingParams::default() };
    let out = train(&g, &params, Layer::FocusE).unwrap();
    assert_eq!(out.losses.len(), 15);
    assert_eq!(out.train_facts, 950);
    assert_eq!(out.validation_facts, 50);
    let first = out.losses[0].train;
    let last = out.losses[14].train;
    assert!(first > 0.0);
    assert!(last < first, "{first} -> {last}");
    for i in 0..out.model.entities.len() {
        let norm: f64 = out.model.entity_value(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1.0 + 1e-12);
    }
}

#[test]
fn training_is_deterministic_and_focus_reduces_at_beta_one() {
    let g = common::synthetic_graph(4, 400);
    let params = EmbeddingParams::<f64> {
        n: 8,
        m: 8,
        seed: 5,
        beta: 1.0,
        epochs: 3,
        batch_size: 64,
        ..EmbeddingParams::default()
    };
    let a = train(&g, &params, Layer::FocusE).unwrap();
    let b = train(&g, &params, Layer::FocusE).unwrap();
    let plain = train(&g, &params, Layer::Plain).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.model, plain.model);
    let shifted = train(&g, &EmbeddingParams { beta: 0.2, ..params }, Layer::FocusE).unwrap();
    assert_ne!(shifted.model, a.model);
}

#[test]
fn empty_graph_is_rejected() {
    let g = KnowledgeGraph::new();
    assert!(matches!(train(&g, &small_params(0), Layer::FocusE), Err(EmbeddingError::EmptyGraph)));
}

#[test]
fn checkpoint_round_trips() {
    let g = common::synthetic_graph(6, 300);
    let fresh = init_model(&g, &small_params(1)).unwrap();
    let mut buf = Vec::new();
    save_model(&fresh, &mut buf).unwrap();
    assert!(buf.starts_with(b"covkg-transd v1"));
    let back: TransD<f64> = load_model(buf.as_slice()).unwrap();
    assert_eq!(back, fresh);

    let trained = train(&g, &EmbeddingParams { epochs: 1, ..small_params(1) }, Layer::FocusE).unwrap().model;
    let mut buf = Vec::new();
    save_model(&trained, &mut buf).unwrap();
    let back: TransD<f64> = load_model(buf.as_slice()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    use rand::Rng;
    for _ in 0..100 {
        let (h, t) = (rng.random_range(0..g.entity_count()), rng.random_range(0..g.entity_count()));
        let r = rng.random_range(0..trained.relations.len());
        assert_eq!(back.distance(h, r, t).to_bits(), trained.distance(h, r, t).to_bits());
    }

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(load_model::<f64, _>(bad.as_slice()), Err(EmbeddingError::BadMagic)));
    assert!(matches!(load_model::<f64, _>(&buf[..buf.len() - 3]), Err(EmbeddingError::Truncated(_))));
}

#[test]
fn f32_model_trains() {
    let g = common::synthetic_graph(8, 300);
    let params = EmbeddingParams::<f32> { n: 8, m: 8, epochs: 3, ..EmbeddingParams::default() };
    let out = train(&g, &params, Layer::FocusE).unwrap();
    assert!(out.losses.iter().all(|l| l.train.is_finite()));
}
