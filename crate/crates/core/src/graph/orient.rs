use std::collections::{BTreeMap, BTreeSet};

use super::{Adjacency, Dag, PartiallyDirectedGraph};

/// Separating sets keyed by unordered pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepSets {
    sets: BTreeMap<(usize, usize), BTreeSet<usize>>,
}

impl SepSets {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    pub fn insert(&mut self, i: usize, j: usize, set: impl IntoIterator<Item = usize>) {
        self.sets.insert(Self::key(i, j), set.into_iter().collect());
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&BTreeSet<usize>> {
        self.sets.get(&Self::key(i, j))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &BTreeSet<usize>)> {
        self.sets.iter()
    }

    /// `{"i,j": [k, ...]}` as used by the sepsets JSON artifact.
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .sets
            .iter()
            .map(|(&(i, j), s)| {
                (
                    format!("{i},{j}"),
                    serde_json::json!(s.iter().collect::<Vec<_>>()),
                )
            })
            .collect();
        serde_json::Value::Object(map)
    }
}

/// Orients every unshielded triple `i - k - j` whose separating set omits `k`
/// as `i -> k <- j`.
///
/// Pairs without a recorded separating set are left alone. An arm that would
/// contradict an orientation made earlier in the scan is skipped.
pub fn orient_v_structures(skel: &Adjacency, sepsets: &SepSets) -> PartiallyDirectedGraph {
    let mut g = PartiallyDirectedGraph::from_skeleton(skel);
    let n = skel.n();
    for k in 0..n {
        let nbrs: Vec<usize> = skel.row_ones(k).filter(|&x| x != k).collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[a + 1..] {
                if skel.get(i, j) {
                    continue;
                }
                let Some(sep) = sepsets.get(i, j) else {
                    continue;
                };
                if sep.contains(&k) {
                    continue;
                }
                for x in [i, j] {
                    if !g.is_directed(k, x) {
                        g.orient(x, k);
                    }
                }
            }
        }
    }
    g
}

/// Applies Meek rules R1-R4 until no rule fires.
pub fn meek_closure(pdag: &PartiallyDirectedGraph) -> PartiallyDirectedGraph {
    let mut g = pdag.clone();
    let n = g.d();
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if a != b && g.is_undirected(a, b) && should_orient(&g, a, b) {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            return g;
        }
    }
}

fn should_orient(g: &PartiallyDirectedGraph, a: usize, b: usize) -> bool {
    let n = g.d();
    // R1: c -> a - b, c and b nonadjacent
    if (0..n).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if (0..n).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // R3: a - c -> b, a - d -> b, c and d nonadjacent
    let into_b: Vec<usize> = (0..n)
        .filter(|&c| g.is_undirected(a, c) && g.is_directed(c, b))
        .collect();
    for (x, &c) in into_b.iter().enumerate() {
        if into_b[x + 1..].iter().any(|&d| !g.adjacent(c, d)) {
            return true;
        }
    }
    // R4: c -> d -> b with a adjacent to c and d, c and b nonadjacent
    for d in 0..n {
        if d == a || !g.is_directed(d, b) || !g.adjacent(a, d) {
            continue;
        }
        if (0..n).any(|c| {
            c != a && c != b && g.is_directed(c, d) && g.adjacent(a, c) && !g.adjacent(c, b)
        }) {
            return true;
        }
    }
    false
}

/// A DAG with the same skeleton and v-structures as `pdag` that keeps every
/// directed edge, by the sink-elimination procedure of Dor and Tarsi. Ties
/// go to the lowest-index node, so the result is canonical. `None` when no
/// such extension exists.
pub fn consistent_extension(pdag: &PartiallyDirectedGraph) -> Option<Adjacency> {
    let n = pdag.d();
    let mut out = pdag.directed().clone();
    let mut alive = vec![true; n];
    for _ in 0..n {
        let pick = (0..n).find(|&x| {
            if !alive[x] {
                return false;
            }
            let has_out = (0..n).any(|y| alive[y] && pdag.is_directed(x, y));
            if has_out {
                return false;
            }
            let adjacent: Vec<usize> = (0..n).filter(|&y| alive[y] && pdag.adjacent(x, y)).collect();
            adjacent.iter().filter(|&&y| pdag.is_undirected(x, y)).all(|&y| {
                adjacent.iter().all(|&z| z == y || pdag.adjacent(y, z))
            })
        })?;
        for y in 0..n {
            if alive[y] && pdag.is_undirected(pick, y) {
                out.set(y, pick, true);
            }
        }
        alive[pick] = false;
    }
    Some(out)
}

/// Completed partially directed graph representing the Markov class of `dag`.
pub fn cpdag(dag: &Dag) -> PartiallyDirectedGraph {
    let adj = dag.adjacency();
    let skel = super::skeleton(adj);
    let mut g = PartiallyDirectedGraph::from_skeleton(&skel);
    let n = dag.d();
    for k in 0..n {
        let parents: Vec<usize> = adj.col_ones(k).collect();
        for (x, &i) in parents.iter().enumerate() {
            for &j in &parents[x + 1..] {
                if !skel.get(i, j) {
                    g.orient(i, k);
                    g.orient(j, k);
                }
            }
        }
    }
    meek_closure(&g)
}
