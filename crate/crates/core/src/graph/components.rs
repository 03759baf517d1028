use std::collections::{BTreeMap, HashMap};

use super::{EntityKind, GraphError, KnowledgeGraph};

/// A weakly connected component: sorted entity indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub members: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Weakly connected components of the subgraph induced by entities of the
/// given kinds. Edge direction is ignored. Components are ordered by their
/// smallest member.
pub fn weakly_connected_components(graph: &KnowledgeGraph, kinds: &[EntityKind]) -> Vec<Component> {
    let mut nodes: Vec<usize> =
        kinds.iter().flat_map(|&k| graph.entities_of_kind(k).iter().copied()).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    let mut uf = UnionFind::new(nodes.len());
    for t in graph.triples() {
        if let (Some(&a), Some(&b)) = (local.get(&t.head), local.get(&t.tail)) {
            uf.union(a, b);
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &n) in nodes.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(n);
    }
    let mut comps: Vec<Component> = groups.into_values().map(|members| Component { members }).collect();
    comps.sort_by_key(|c| c.members[0]);
    comps
}

/// Number of nodes on the longest directed path inside `component`, following
/// every fact whose endpoints both lie in it.
pub fn longest_path_length(graph: &KnowledgeGraph, component: &Component) -> Result<usize, GraphError> {
    let n = component.members.len();
    if n == 0 {
        return Ok(0);
    }
    let local: HashMap<usize, usize> = component.members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (i, &m) in component.members.iter().enumerate() {
        for &f in graph.facts_with_head(m) {
            if let Some(&j) = local.get(&graph.triples()[f].tail) {
                succ[i].push(j);
                indeg[j] += 1;
            }
        }
    }

    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut longest = vec![1usize; n];
    let mut visited = 0;
    while let Some(i) = queue.pop() {
        visited += 1;
        for &j in &succ[i] {
            longest[j] = longest[j].max(longest[i] + 1);
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push(j);
            }
        }
    }
    if visited < n {
        let cycle = find_cycle(&succ, &indeg);
        return Err(GraphError::Cycle(
            cycle.into_iter().map(|i| graph.entity(component.members[i]).clone()).collect(),
        ));
    }
    Ok(longest.into_iter().max().unwrap_or(0))
}

// Nodes with leftover in-degree after Kahn's pass all have a predecessor in the
// leftover set, so walking predecessors must revisit a node.
fn find_cycle(succ: &[Vec<usize>], indeg: &[usize]) -> Vec<usize> {
    let n = succ.len();
    let mut pred: Vec<Option<usize>> = vec![None; n];
    for (i, s) in succ.iter().enumerate() {
        if indeg[i] == 0 {
            continue;
        }
        for &j in s {
            if indeg[j] > 0 && pred[j].is_none() {
                pred[j] = Some(i);
            }
        }
    }
    let start = (0..n).find(|&i| indeg[i] > 0).expect("leftover node");
    let mut pos = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut cur = start;
    while pos[cur] == usize::MAX {
        pos[cur] = path.len();
        path.push(cur);
        cur = pred[cur].expect("leftover node has a leftover predecessor");
    }
    let mut cycle = path.split_off(pos[cur]);
    cycle.reverse();
    cycle
}

/// Component-size and longest-path distributions (value -> number of components).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WccHistograms {
    pub component_count: usize,
    pub sizes: BTreeMap<usize, usize>,
    pub longest_paths: BTreeMap<usize, usize>,
}

impl WccHistograms {
    pub fn sizes_csv(&self) -> String {
        histogram_csv("size", &self.sizes)
    }

    pub fn longest_paths_csv(&self) -> String {
        histogram_csv("longest_path", &self.longest_paths)
    }
}

fn histogram_csv(label: &str, h: &BTreeMap<usize, usize>) -> String {
    let mut out = format!("{label},components\n");
    for (k, v) in h {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

pub fn wcc_histograms(graph: &KnowledgeGraph, kinds: &[EntityKind]) -> Result<WccHistograms, GraphError> {
    let comps = weakly_connected_components(graph, kinds);
    let mut h = WccHistograms { component_count: comps.len(), ..Default::default() };
    for c in &comps {
        *h.sizes.entry(c.len()).or_default() += 1;
        *h.longest_paths.entry(longest_path_length(graph, c)?).or_default() += 1;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityRef, Fact, RelationType};
    use proptest::prelude::*;

    fn tweet(id: usize) -> EntityRef {
        EntityRef::new(EntityKind::Tweet, id.to_string()).unwrap()
    }

    fn graph_with(n: usize, edges: &[(usize, usize, RelationType)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 0..n {
            g.ensure_entity(&tweet(i));
        }
        for &(a, b, r) in edges {
            g.add_fact(&Fact::new(tweet(a), r, tweet(b))).unwrap();
        }
        g
    }

    const R: RelationType = RelationType::RepliesTo;
    const Q: RelationType = RelationType::Quotes;

    #[test]
    fn reply_pair_is_one_component() {
        let g = graph_with(2, &[(1, 0, R)]);
        let c = weakly_connected_components(&g, &[EntityKind::Tweet]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 2);
    }

    #[test]
    fn isolated_tweets() {
        let g = graph_with(3, &[]);
        let c = weakly_connected_components(&g, &[EntityKind::Tweet]);
        assert_eq!(c.iter().map(Component::len).collect::<Vec<_>>(), [1, 1, 1]);
    }

    #[test]
    fn thread_with_quote_is_one_component() {
        // root 0, replies 1..=3, tweet 4 quotes reply 2
        let g = graph_with(5, &[(1, 0, R), (2, 0, R), (3, 0, R), (4, 2, Q)]);
        let c = weakly_connected_components(&g, &[EntityKind::Tweet]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 5);
    }

    #[test]
    fn kind_filter_excludes_other_kinds() {
        let mut g = graph_with(2, &[]);
        let u = EntityRef::new(EntityKind::User, "u").unwrap();
        g.ensure_entity(&u);
        g.add_fact(&Fact::new(tweet(0), RelationType::AuthoredBy, u.clone())).unwrap();
        g.add_fact(&Fact::new(tweet(1), RelationType::AuthoredBy, u)).unwrap();
        assert_eq!(weakly_connected_components(&g, &[EntityKind::Tweet]).len(), 2);
        assert_eq!(weakly_connected_components(&g, &[EntityKind::Tweet, EntityKind::User]).len(), 1);
    }

    #[test]
    fn longest_paths() {
        let single = graph_with(1, &[]);
        let c = weakly_connected_components(&single, &[EntityKind::Tweet]);
        assert_eq!(longest_path_length(&single, &c[0]).unwrap(), 1);

        let chain = graph_with(4, &[(1, 0, R), (2, 1, R), (3, 2, R)]);
        let c = weakly_connected_components(&chain, &[EntityKind::Tweet]);
        assert_eq!(longest_path_length(&chain, &c[0]).unwrap(), 4);

        let star = graph_with(4, &[(1, 0, R), (2, 0, R), (3, 0, R)]);
        let c = weakly_connected_components(&star, &[EntityKind::Tweet]);
        assert_eq!(longest_path_length(&star, &c[0]).unwrap(), 2);
    }

    #[test]
    fn cycle_is_reported_with_its_members() {
        let g = graph_with(4, &[(0, 1, R), (1, 2, R), (2, 0, Q), (3, 0, R)]);
        let c = weakly_connected_components(&g, &[EntityKind::Tweet]);
        match longest_path_length(&g, &c[0]) {
            Err(GraphError::Cycle(members)) => {
                let mut ids: Vec<_> = members.iter().map(|e| e.id().to_string()).collect();
                ids.sort();
                assert_eq!(ids, ["0", "1", "2"]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn components_partition_and_ignore_direction(
            n in 1usize..25,
            raw in proptest::collection::vec((0usize..25, 0usize..25), 0..40)
        ) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n, R)).collect();
            let fwd = graph_with(n, &edges);
            let rev_edges: Vec<_> = edges.iter().map(|&(a, b, r)| (b, a, r)).collect();
            let rev = graph_with(n, &rev_edges);
            let c1 = weakly_connected_components(&fwd, &[EntityKind::Tweet]);
            let c2 = weakly_connected_components(&rev, &[EntityKind::Tweet]);
            prop_assert_eq!(c1.iter().map(Component::len).sum::<usize>(), n);
            let mut all: Vec<usize> = c1.iter().flat_map(|c| c.members.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(c1, c2);
        }
    }
}
