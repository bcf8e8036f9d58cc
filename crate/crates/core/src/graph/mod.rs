//! Graph representations shared by learners, aggregators and metrics.
//!
//! Everything is a dense boolean matrix: `adj[i][j]` means `i -> j`. Graphs
//! in this domain have at most a few hundred nodes, so the dense layout keeps
//! edge queries O(1) and the code simple.

mod dsep;
mod io;
mod orient;

pub use dsep::d_separated;
pub use io::{read_adjacency_csv, write_adjacency_csv};
pub use orient::{consistent_extension, cpdag, meek_closure, orient_v_structures, SepSets};

use serde::Serialize;

use crate::error::{Error, Result};

/// Square boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut a = Self::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a.set(i, j, true);
                }
            }
        }
        a
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut a = Self::new(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            for (j, &b) in r.iter().enumerate() {
                a.set(i, j, b);
            }
        }
        Ok(a)
    }

    /// Builds from an edge list of ordered pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::new(n);
        for &(i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    /// Number of `true` entries.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// All `(i, j)` with `adj[i][j]` set, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| self.get(i, j))
                .map(move |j| (i, j))
        })
    }

    /// Column indices set in row `i`.
    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    /// Row indices set in column `j`.
    pub fn col_ones(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.get(i, j))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.n);
        for (i, j) in self.edges() {
            t.set(j, i, true);
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.get(i, i))
    }

    pub fn clear_diagonal(&mut self) {
        for i in 0..self.n {
            self.set(i, i, false);
        }
    }

    /// Elementwise `self & other`.
    pub fn and(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    /// Elementwise `self | other`.
    pub fn or(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    /// `true` when every set entry of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Undirected edge count of a symmetric matrix.
    pub fn undirected_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.get(i, j)).count())
            .sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.n,
            })
        } else {
            Ok(())
        }
    }
}

/// Default variable names `X0..X{d-1}`.
pub fn default_labels(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("X{i}")).collect()
}

/// Labeled directed graph; cycles allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    adj: Adjacency,
    labels: Vec<String>,
}

impl DirectedGraph {
    pub fn new(adj: Adjacency, labels: Vec<String>) -> Result<Self> {
        if labels.len() != adj.n() {
            return Err(Error::DimensionMismatch {
                expected: adj.n(),
                found: labels.len(),
            });
        }
        if adj.has_self_loops() {
            return Err(Error::InvalidConfig("self-loop in directed graph".into()));
        }
        Ok(Self { adj, labels })
    }

    pub fn unlabeled(adj: Adjacency) -> Result<Self> {
        let labels = default_labels(adj.n());
        Self::new(adj, labels)
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn d(&self) -> usize {
        self.adj.n()
    }

    pub fn is_acyclic(&self) -> bool {
        is_acyclic(&self.adj)
    }
}

/// Directed acyclic graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    graph: DirectedGraph,
    order: Vec<usize>,
}

impl Dag {
    pub fn new(graph: DirectedGraph) -> Result<Self> {
        let order = topological_order(graph.adjacency())
            .ok_or_else(|| Error::InvalidConfig("graph contains a directed cycle".into()))?;
        Ok(Self { graph, order })
    }

    pub fn from_adjacency(adj: Adjacency) -> Result<Self> {
        Self::new(DirectedGraph::unlabeled(adj)?)
    }

    pub fn empty(d: usize) -> Self {
        Self::from_adjacency(Adjacency::new(d)).expect("empty graph is acyclic")
    }

    pub fn with_labels(self, labels: Vec<String>) -> Result<Self> {
        let graph = DirectedGraph::new(self.graph.adj, labels)?;
        Ok(Self {
            graph,
            order: self.order,
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.graph.adj
    }

    pub fn labels(&self) -> &[String] {
        &self.graph.labels
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    /// A topological order (parents before children).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.adjacency().col_ones(v).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.adjacency().row_ones(v).collect()
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.d()];
        let mut stack: Vec<usize> = adj.row_ones(v).collect();
        while let Some(x) = stack.pop() {
            if !seen[x] {
                seen[x] = true;
                stack.extend(adj.row_ones(x));
            }
        }
        seen
    }

    /// Graph with all edges into `target` removed.
    pub fn mutilated(&self, target: usize) -> Dag {
        let mut adj = self.adjacency().clone();
        for p in 0..self.d() {
            adj.set(p, target, false);
        }
        Dag::new(DirectedGraph::new(adj, self.labels().to_vec()).expect("same labels"))
            .expect("removing edges keeps a DAG acyclic")
    }
}

/// Partially directed graph: every adjacent pair is either directed or undirected.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartiallyDirectedGraph {
    directed: Adjacency,
    undirected: Adjacency,
}

impl PartiallyDirectedGraph {
    pub fn new(directed: Adjacency, undirected: Adjacency) -> Result<Self> {
        let n = directed.n();
        if undirected.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: undirected.n(),
            });
        }
        if !undirected.is_symmetric() {
            return Err(Error::InvalidConfig(
                "undirected part is not symmetric".into(),
            ));
        }
        if directed.has_self_loops() || undirected.has_self_loops() {
            return Err(Error::InvalidConfig(
                "self-loop in partially directed graph".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if directed.get(i, j) && (directed.get(j, i) || undirected.get(i, j)) {
                    return Err(Error::InvalidConfig(format!(
                        "pair ({i},{j}) carries more than one mark"
                    )));
                }
            }
        }
        Ok(Self {
            directed,
            undirected,
        })
    }

    /// Undirected graph over a symmetric skeleton.
    pub fn from_skeleton(skel: &Adjacency) -> Self {
        let mut u = skel.clone();
        u.clear_diagonal();
        let u = u.or(&u.transpose());
        Self {
            directed: Adjacency::new(skel.n()),
            undirected: u,
        }
    }

    /// Fully directed graph; 2-cycles become undirected edges.
    pub fn from_directed(adj: &Adjacency) -> Self {
        let n = adj.n();
        let mut directed = Adjacency::new(n);
        let mut undirected = Adjacency::new(n);
        for (i, j) in adj.edges() {
            if i == j {
                continue;
            }
            if adj.get(j, i) {
                undirected.set(i, j, true);
                undirected.set(j, i, true);
            } else {
                directed.set(i, j, true);
            }
        }
        Self {
            directed,
            undirected,
        }
    }

    pub fn d(&self) -> usize {
        self.directed.n()
    }

    pub fn directed(&self) -> &Adjacency {
        &self.directed
    }

    pub fn undirected(&self) -> &Adjacency {
        &self.undirected
    }

    #[inline]
    pub fn is_directed(&self, i: usize, j: usize) -> bool {
        self.directed.get(i, j)
    }

    #[inline]
    pub fn is_undirected(&self, i: usize, j: usize) -> bool {
        self.undirected.get(i, j)
    }

    #[inline]
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.directed.get(i, j) || self.directed.get(j, i) || self.undirected.get(i, j)
    }

    /// Replaces the mark on `{i, j}` with `i -> j`.
    pub fn orient(&mut self, i: usize, j: usize) {
        self.undirected.set(i, j, false);
        self.undirected.set(j, i, false);
        self.directed.set(j, i, false);
        self.directed.set(i, j, true);
    }

    /// Adjacency where undirected edges count in both directions.
    pub fn to_adjacency(&self) -> Adjacency {
        self.directed.or(&self.undirected)
    }

    pub fn skeleton(&self) -> Adjacency {
        let a = self.to_adjacency();
        a.or(&a.transpose())
    }
}

/// Topological order, or `None` when the graph has a cycle (Kahn's algorithm).
pub fn topological_order(adj: &Adjacency) -> Option<Vec<usize>> {
    let n = adj.n();
    let mut indeg: Vec<usize> = (0..n).map(|j| adj.col_ones(j).count()).collect();
    let mut ready: Vec<usize> = (0..n).rev().filter(|&j| indeg[j] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for c in adj.row_ones(v) {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub fn is_acyclic(adj: &Adjacency) -> bool {
    topological_order(adj).is_some()
}

/// `true` when `to` is reachable from `from` along directed edges.
pub fn has_directed_path(adj: &Adjacency, from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.n()];
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        if seen[x] {
            continue;
        }
        seen[x] = true;
        stack.extend(adj.row_ones(x).filter(|&c| !seen[c]));
    }
    false
}

/// Undirected skeleton of a directed adjacency: symmetric, zero diagonal.
pub fn skeleton(adj: &Adjacency) -> Adjacency {
    let mut s = adj.or(&adj.transpose());
    s.clear_diagonal();
    s
}

/// `|N(u) ∩ N(v)|` in a symmetric skeleton, scanning the smaller neighborhood.
pub fn common_neighbors(skel: &Adjacency, u: usize, v: usize) -> Result<usize> {
    skel.check_index(u)?;
    skel.check_index(v)?;
    if u == v {
        return Err(Error::InvalidMove(format!(
            "common neighbors of {u} with itself"
        )));
    }
    let deg_u = skel.row_ones(u).count();
    let deg_v = skel.row_ones(v).count();
    let (small, other) = if deg_u <= deg_v { (u, v) } else { (v, u) };
    Ok(skel.row_ones(small).filter(|&w| skel.get(other, w)).count())
}

/// Face counts and derived invariants of the clique complex of a skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FVector {
    pub f0: usize,
    pub f1: usize,
    pub f2: usize,
    pub chi: i64,
    pub b1: usize,
    pub c: usize,
}

pub fn f_vector(skel: &Adjacency) -> FVector {
    let n = skel.n();
    let f1 = skel.undirected_count();
    let mut f2 = 0;
    for a in 0..n {
        for b in (a + 1)..n {
            if !skel.get(a, b) {
                continue;
            }
            f2 += ((b + 1)..n)
                .filter(|&c| skel.get(a, c) && skel.get(b, c))
                .count();
        }
    }
    let c = connected_components(skel);
    FVector {
        f0: n,
        f1,
        f2,
        chi: n as i64 - f1 as i64 + f2 as i64,
        b1: f1 + c - n,
        c,
    }
}

/// Connected components of a symmetric skeleton via union-find.
pub fn connected_components(skel: &Adjacency) -> usize {
    let n = skel.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = n;
    for (i, j) in skel.edges() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            comps -= 1;
        }
    }
    comps
}
