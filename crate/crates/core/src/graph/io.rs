//! Triples TSV and attribute-sidecar JSONL.
//!
//! Triples: `head_kind:head_id<TAB>relation<TAB>tail_kind:tail_id<TAB>weight`,
//! weight `-` or a 6-decimal number, after the `#covkg-triples v1` header.
//! Sidecar: one `{"kind","id","attrs"}` object per entity in insertion order,
//! then one object per attributed fact with kind `fact` and the fact's
//! `head<TAB>relation<TAB>tail` as id.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Attrs, EntityKind, EntityRef, Fact, GraphError, KnowledgeGraph, RelationType};

pub const TRIPLES_HEADER: &str = "#covkg-triples v1";

const FACT_KIND: &str = "fact";

#[derive(Serialize, Deserialize)]
struct AttrLine<'a> {
    kind: &'a str,
    id: String,
    attrs: Attrs,
}

fn fact_key(graph: &KnowledgeGraph, i: usize) -> String {
    let t = graph.triples()[i];
    format!("{}\t{}\t{}", graph.entity(t.head), t.relation, graph.entity(t.tail))
}

pub fn export_triples<W: Write>(graph: &KnowledgeGraph, mut out: W) -> Result<(), GraphError> {
    writeln!(out, "{TRIPLES_HEADER}")?;
    for i in 0..graph.fact_count() {
        let weight = match graph.triples()[i].weight {
            Some(w) => format!("{w:.6}"),
            None => "-".to_string(),
        };
        writeln!(out, "{}\t{}", fact_key(graph, i), weight)?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_attrs<W: Write>(graph: &KnowledgeGraph, mut out: W) -> Result<(), GraphError> {
    for (entity, attrs) in graph.entities() {
        let line =
            AttrLine { kind: entity.kind().as_str(), id: entity.id().to_string(), attrs: attrs.clone() };
        writeln!(out, "{}", serde_json::to_string(&line).expect("attrs serialize"))?;
    }
    for i in 0..graph.fact_count() {
        if let Some(attrs) = graph.fact_attrs(i) {
            let line = AttrLine { kind: FACT_KIND, id: fact_key(graph, i), attrs: attrs.clone() };
            writeln!(out, "{}", serde_json::to_string(&line).expect("attrs serialize"))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse { line, message: message.into() }
}

fn parse_triple(line: &str) -> Result<Fact, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 4 {
        return Err(format!("expected 4 tab-separated columns, found {}", cols.len()));
    }
    let head: EntityRef = cols[0].parse().map_err(|e: GraphError| e.to_string())?;
    let relation: RelationType = cols[1].parse().map_err(|e: GraphError| e.to_string())?;
    let tail: EntityRef = cols[2].parse().map_err(|e: GraphError| e.to_string())?;
    let weight = match cols[3] {
        "-" => None,
        w => {
            let (_, frac) =
                w.split_once('.').ok_or_else(|| format!("weight {w:?} lacks 6 fractional digits"))?;
            if frac.len() != 6 {
                return Err(format!("weight {w:?} lacks 6 fractional digits"));
            }
            Some(w.parse::<f64>().map_err(|e| format!("weight {w:?}: {e}"))?)
        }
    };
    Ok(Fact { head, tail, relation, weight })
}

/// Reads a graph back from its triples file and (optionally) its sidecar.
/// Entities missing from the sidecar are created with empty attributes.
pub fn import_graph<R: BufRead, S: BufRead>(
    triples: R,
    attrs: Option<S>,
) -> Result<KnowledgeGraph, GraphError> {
    let mut graph = KnowledgeGraph::new();
    let mut fact_attrs: Vec<(usize, String, Attrs)> = Vec::new();

    if let Some(attrs) = attrs {
        for (n, line) in attrs.lines().enumerate() {
            let lineno = n + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: AttrLine =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("attrs: {e}")))?;
            if parsed.kind == FACT_KIND {
                fact_attrs.push((lineno, parsed.id, parsed.attrs));
                continue;
            }
            let kind: EntityKind =
                parsed.kind.parse().map_err(|e: GraphError| parse_err(lineno, format!("attrs: {e}")))?;
            let entity =
                EntityRef::new(kind, parsed.id).map_err(|e| parse_err(lineno, format!("attrs: {e}")))?;
            graph.add_entity(entity, parsed.attrs);
        }
    }

    let mut lines = triples.lines();
    let first = lines.next().transpose()?;
    if first.as_deref().map(str::trim_end) != Some(TRIPLES_HEADER) {
        return Err(parse_err(1, format!("missing header {TRIPLES_HEADER:?}")));
    }
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fact = parse_triple(&line).map_err(|m| parse_err(lineno, m))?;
        graph.ensure_entity(&fact.head);
        graph.ensure_entity(&fact.tail);
        graph.add_fact(&fact).map_err(|e| parse_err(lineno, e.to_string()))?;
    }

    for (lineno, key, attrs) in fact_attrs {
        let fact =
            parse_triple(&format!("{key}\t-")).map_err(|m| parse_err(lineno, format!("attrs: {m}")))?;
        for (k, v) in attrs {
            graph
                .set_fact_attr(&fact.head, fact.relation, &fact.tail, &k, v)
                .map_err(|e| parse_err(lineno, format!("attrs: {e}")))?;
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn export(g: &KnowledgeGraph) -> (String, String) {
        let mut t = Vec::new();
        let mut a = Vec::new();
        export_triples(g, &mut t).unwrap();
        export_attrs(g, &mut a).unwrap();
        (String::from_utf8(t).unwrap(), String::from_utf8(a).unwrap())
    }

    fn import(t: &str, a: &str) -> KnowledgeGraph {
        import_graph(t.as_bytes(), Some(a.as_bytes())).unwrap()
    }

    #[test]
    fn empty_graph_is_header_only() {
        let (t, a) = export(&KnowledgeGraph::new());
        assert_eq!(t, "#covkg-triples v1\n");
        assert_eq!(a, "");
    }

    #[test]
    fn weighted_fact_line() {
        let mut g = KnowledgeGraph::new();
        let tw = EntityRef::new(EntityKind::Tweet, "1").unwrap();
        let tp = EntityRef::new(EntityKind::Topic, "topic-6").unwrap();
        g.ensure_entity(&tw);
        g.ensure_entity(&tp);
        g.add_fact(&Fact::weighted(tw, RelationType::HasTopic, tp, 0.625)).unwrap();
        let (t, _) = export(&g);
        assert_eq!(t, "#covkg-triples v1\ntweet:1\thas_topic\ttopic:topic-6\t0.625000\n");
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let bad = "#covkg-triples v1\ntweet:1\tauthored_by\tuser:2\t-\ntweet:1\tfoo\tuser:2\t-\n";
        match import_graph(bad.as_bytes(), None::<&[u8]>) {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "#covkg-triples v1\ntweet:1\thas_topic\ttopic:t\t0.5\n";
        assert!(matches!(
            import_graph(short.as_bytes(), None::<&[u8]>),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            import_graph("tweet:1".as_bytes(), None::<&[u8]>),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn fact_attrs_round_trip() {
        let mut g = KnowledgeGraph::new();
        let tw = EntityRef::new(EntityKind::Tweet, "7").unwrap();
        let kw = EntityRef::new(EntityKind::Keyword, "mask").unwrap();
        g.ensure_entity(&tw);
        g.ensure_entity(&kw);
        g.add_fact(&Fact::weighted(tw.clone(), RelationType::HasKeyword, kw.clone(), 0.8)).unwrap();
        g.set_fact_attr(&tw, RelationType::HasKeyword, &kw, "aspect_sentiment", serde_json::json!(-0.612372))
            .unwrap();
        let (t, a) = export(&g);
        let back = import(&t, &a);
        assert_eq!(back, g);
    }

    fn arb_graph() -> impl Strategy<Value = KnowledgeGraph> {
        (
            1usize..8,
            proptest::collection::vec((0usize..8, 0usize..8, 0.0f64..=1.0), 0..20),
            proptest::collection::vec((0usize..8, -1e6f64..1e6), 0..8),
        )
            .prop_map(|(n, edges, attrs)| {
                let mut g = KnowledgeGraph::new();
                let tw = |i: usize| EntityRef::new(EntityKind::Tweet, i.to_string()).unwrap();
                let tp = |i: usize| EntityRef::new(EntityKind::Topic, format!("topic-{i}")).unwrap();
                for i in 0..n {
                    g.ensure_entity(&tw(i));
                    g.ensure_entity(&tp(i));
                }
                g.add_entity(EntityRef::new(EntityKind::Date, "2021-06-17").unwrap(), Attrs::new());
                for (a, b, w) in edges {
                    let (a, b) = (a % n, b % n);
                    g.add_fact(&Fact::weighted(tw(a), RelationType::HasTopic, tp(b), w)).unwrap();
                    if a != b {
                        g.add_fact(&Fact::new(tw(a), RelationType::RepliesTo, tw(b))).unwrap();
                    }
                }
                for (i, v) in attrs {
                    let mut at = Attrs::new();
                    at.insert("score".into(), serde_json::json!(v));
                    g.add_entity(tw(i % n), at);
                }
                g
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(g in arb_graph()) {
            let (t, a) = export(&g);
            let back = import(&t, &a);
            prop_assert_eq!(&back, &g);
            let (t2, a2) = export(&back);
            prop_assert_eq!(t, t2);
            prop_assert_eq!(a, a2);
        }
    }
}
