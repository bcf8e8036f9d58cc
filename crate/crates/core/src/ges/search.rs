//! The shared two-phase hill climber.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;

use super::penalty::{tces_jstab_local, tces_sheaf_local};
use super::{Move, ScoreConfig, ScoreDelta};
use crate::data::MultiRegimeData;
use crate::error::{Error, Result};
use crate::graph::{consistent_extension, cpdag, has_directed_path, Adjacency, Dag, PartiallyDirectedGraph};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::stats::LocalScorer;

/// Moves must beat this to be accepted, so float noise cannot cycle.
const ACCEPT_EPS: f64 = 1e-9;

/// Operator subsets are enumerated over at most this many candidate nodes.
const MAX_SUBSET_BITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Forward,
    Backward,
}

/// One accepted move. `child` is the node whose parent set grew (or, for
/// deletions, shrank).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub step: usize,
    pub phase: Phase,
    pub child: usize,
    pub delta: ScoreDelta,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub dag: Dag,
    pub log: Vec<Decision>,
    pub empty_score: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct Local {
    bic: f64,
    sheaf: f64,
    j: f64,
}

/// Search state: the current DAG with incrementally maintained parent sets,
/// skeleton neighborhoods, edge and triangle counts, plus a cache of local
/// score components keyed by `(node, sorted parents)`.
pub struct Searcher<T> {
    cfg: ScoreConfig,
    pooled: Matrix<T>,
    envs: Vec<Matrix<T>>,
    scorer: LocalScorer<T>,
    cache: HashMap<(usize, Vec<usize>), Local>,
    adj: Adjacency,
    parents: Vec<Vec<usize>>,
    neighbors: Vec<BTreeSet<usize>>,
    n_edges: usize,
    n_triangles: usize,
}

fn contiguous_folds<T: Real>(m: &Matrix<T>, k: usize) -> Vec<Matrix<T>> {
    let n = m.rows();
    let k = k.min(n).max(1);
    (0..k)
        .map(|f| {
            let rows: Vec<usize> = (f * n / k..(f + 1) * n / k).collect();
            m.select_rows(&rows)
        })
        .collect()
}

impl<T: Real> Searcher<T> {
    pub fn new(data: &MultiRegimeData<T>, cfg: &ScoreConfig) -> Result<Self> {
        cfg.validate()?;
        let d = data.d();
        let raw = data.pooled();
        if raw.rows() <= d + 2 {
            return Err(Error::InsufficientData(format!(
                "score search needs more than d + 2 = {} rows, got {}",
                d + 2,
                raw.rows()
            )));
        }
        let (_, cov) = raw.covariance();
        if let Some(j) = (0..d).find(|&j| !(cov[(j, j)] > T::zero())) {
            return Err(Error::DegenerateData(format!("column {} is constant", data.labels()[j])));
        }
        let pooled = if cfg.standardize { raw.standardized() } else { raw };
        let envs = if cfg.lambda_j > 0.0 {
            if data.n_regimes() >= 2 {
                let mut out = Vec::with_capacity(data.n_regimes());
                let mut start = 0;
                for r in data.regimes() {
                    let rows: Vec<usize> = (start..start + r.n()).collect();
                    out.push(pooled.select_rows(&rows));
                    start += r.n();
                }
                out
            } else {
                contiguous_folds(&pooled, cfg.pseudo_env_folds)
            }
        } else {
            Vec::new()
        };
        let scorer = LocalScorer::new(&pooled);
        Ok(Self {
            cfg: cfg.clone(),
            pooled,
            envs,
            scorer,
            cache: HashMap::new(),
            adj: Adjacency::new(d),
            parents: vec![Vec::new(); d],
            neighbors: vec![BTreeSet::new(); d],
            n_edges: 0,
            n_triangles: 0,
        })
    }

    /// Replaces the current graph, rebuilding all bookkeeping from scratch.
    pub fn set_graph(&mut self, adj: &Adjacency) -> Result<()> {
        let d = self.d();
        if adj.n() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: adj.n(),
            });
        }
        if !crate::graph::is_acyclic(adj) {
            return Err(Error::InvalidMove("graph is cyclic".into()));
        }
        self.adj = adj.clone();
        self.parents = (0..d).map(|v| adj.col_ones(v).collect()).collect();
        self.neighbors = (0..d)
            .map(|v| adj.col_ones(v).chain(adj.row_ones(v)).collect())
            .collect();
        self.n_edges = self.neighbors.iter().map(BTreeSet::len).sum::<usize>() / 2;
        self.n_triangles = 0;
        for a in 0..d {
            for &b in self.neighbors[a].range(a + 1..) {
                self.n_triangles += self.neighbors[a]
                    .range(b + 1..)
                    .filter(|c| self.neighbors[b].contains(c))
                    .count();
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.adj.n()
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.cfg
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    /// Skeleton neighborhood `Γ(v)`.
    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.neighbors[v]
    }

    /// `(f1, f2)`: skeleton edges and skeleton triangles.
    pub fn topology(&self) -> (usize, usize) {
        (self.n_edges, self.n_triangles)
    }

    fn common(&self, u: usize, v: usize) -> usize {
        self.neighbors[u].intersection(&self.neighbors[v]).count()
    }

    fn local(&mut self, v: usize, parents: &[usize]) -> Result<Local> {
        let key = (v, parents.to_vec());
        if let Some(l) = self.cache.get(&key) {
            return Ok(*l);
        }
        let bic = self.scorer.bic(v, parents)?.as_f64();
        let sheaf = if self.cfg.lambda_sheaf > 0.0 {
            tces_sheaf_local(&self.pooled, v, parents, &self.cfg)?.as_f64()
        } else {
            0.0
        };
        let j = if self.cfg.lambda_j > 0.0 {
            tces_jstab_local(&self.envs, v, parents)?.as_f64()
        } else {
            0.0
        };
        let l = Local { bic, sheaf, j };
        self.cache.insert(key, l);
        Ok(l)
    }

    /// Regularized score of the current graph, summed node by node.
    pub fn score(&mut self) -> Result<f64> {
        let mut s = 0.0;
        for v in 0..self.d() {
            let p = self.parents[v].clone();
            let l = self.local(v, &p)?;
            s += l.bic - self.cfg.lambda_sheaf * l.sheaf - self.cfg.lambda_j * l.j;
        }
        Ok(s - self.cfg.lambda_top * self.n_edges as f64 - self.cfg.lambda_tri * self.n_triangles as f64)
    }

    fn is_covered(&self, u: usize, v: usize) -> bool {
        // u -> v is covered when Pa(v) = Pa(u) ∪ {u}
        self.parents[v].len() == self.parents[u].len() + 1
            && self.parents[v].iter().all(|&p| p == u || self.parents[u].binary_search(&p).is_ok())
    }

    /// Parent-set changes a move would make, after validating it.
    fn changes(&self, mv: Move) -> Result<(Vec<(usize, Vec<usize>)>, i64, i64)> {
        let d = self.d();
        let (u, v) = mv.endpoints();
        for x in [u, v] {
            if x >= d {
                return Err(Error::IndexOutOfRange { index: x, len: d });
            }
        }
        if u == v {
            return Err(Error::InvalidMove(format!("self-loop on {u}")));
        }
        let with = |set: &[usize], x: usize| {
            let mut s = set.to_vec();
            s.push(x);
            s.sort_unstable();
            s
        };
        let without = |set: &[usize], x: usize| set.iter().copied().filter(|&p| p != x).collect::<Vec<_>>();
        match mv {
            Move::Add(..) => {
                if self.adj.get(u, v) || self.adj.get(v, u) {
                    return Err(Error::InvalidMove(format!("{u} and {v} already adjacent")));
                }
                if has_directed_path(&self.adj, v, u) {
                    return Err(Error::InvalidMove(format!("adding {u}->{v} closes a cycle")));
                }
                let c = self.common(u, v) as i64;
                Ok((vec![(v, with(&self.parents[v], u))], 1, c))
            }
            Move::Delete(..) => {
                if !self.adj.get(u, v) {
                    return Err(Error::InvalidMove(format!("no edge {u}->{v} to delete")));
                }
                let c = self.common(u, v) as i64;
                Ok((vec![(v, without(&self.parents[v], u))], -1, -c))
            }
            Move::Reverse(..) => {
                if !self.adj.get(u, v) {
                    return Err(Error::InvalidMove(format!("no edge {u}->{v} to reverse")));
                }
                let mut tmp = self.adj.clone();
                tmp.set(u, v, false);
                if has_directed_path(&tmp, u, v) {
                    return Err(Error::InvalidMove(format!("reversing {u}->{v} closes a cycle")));
                }
                Ok((
                    vec![(v, without(&self.parents[v], u)), (u, with(&self.parents[u], v))],
                    0,
                    0,
                ))
            }
        }
    }

    /// Score change of `mv` on the current graph. Moves that would exceed
    /// the indegree cap come back with `total = -inf`.
    pub fn delta(&mut self, mv: Move) -> Result<ScoreDelta> {
        let (changes, d_f1, d_f2) = self.changes(mv)?;
        if changes.iter().any(|(_, p)| p.len() > self.cfg.d_max) {
            return Ok(ScoreDelta::rejected(mv));
        }
        let (mut d_bic, mut d_sheaf, mut d_j) = (0.0, 0.0, 0.0);
        for (x, new) in &changes {
            let old = self.parents[*x].clone();
            let before = self.local(*x, &old)?;
            let after = self.local(*x, new)?;
            d_bic += after.bic - before.bic;
            d_sheaf += after.sheaf - before.sheaf;
            d_j += after.j - before.j;
        }
        let c = &self.cfg;
        let total = d_bic
            - c.lambda_top * d_f1 as f64
            - c.lambda_tri * d_f2 as f64
            - c.lambda_sheaf * d_sheaf
            - c.lambda_j * d_j;
        Ok(ScoreDelta {
            total,
            d_bic,
            d_f1,
            d_f2,
            d_sheaf,
            d_j,
            mv,
        })
    }

    /// Applies a validated move, keeping `Γ`, `f1` and `f2` in sync.
    pub fn apply(&mut self, mv: Move) -> Result<()> {
        let (changes, d_f1, _) = self.changes(mv)?;
        let (u, v) = mv.endpoints();
        match mv {
            Move::Add(..) => {
                self.n_triangles += self.common(u, v);
                self.adj.set(u, v, true);
            }
            Move::Delete(..) => {
                self.adj.set(u, v, false);
                self.n_triangles -= self.common(u, v);
            }
            Move::Reverse(..) => {
                self.adj.set(u, v, false);
                self.adj.set(v, u, true);
            }
        }
        match d_f1 {
            1 => {
                self.neighbors[u].insert(v);
                self.neighbors[v].insert(u);
                self.n_edges += 1;
            }
            -1 => {
                self.neighbors[u].remove(&v);
                self.neighbors[v].remove(&u);
                self.n_edges -= 1;
            }
            _ => {}
        }
        for (x, new) in changes {
            self.parents[x] = new;
        }
        Ok(())
    }

    /// Exact score change of replacing the current graph with `next`, whose
    /// skeleton differs by the single pair named in `mv`. `None` when `next`
    /// breaks the indegree cap.
    fn transition_delta(&mut self, next: &Adjacency, mv: Move) -> Result<Option<ScoreDelta>> {
        let (x, y) = mv.endpoints();
        let (mut d_bic, mut d_sheaf, mut d_j) = (0.0, 0.0, 0.0);
        for v in 0..self.d() {
            let new: Vec<usize> = next.col_ones(v).collect();
            if new.len() > self.cfg.d_max {
                return Ok(None);
            }
            if new == self.parents[v] {
                continue;
            }
            let old = self.parents[v].clone();
            let before = self.local(v, &old)?;
            let after = self.local(v, &new)?;
            d_bic += after.bic - before.bic;
            d_sheaf += after.sheaf - before.sheaf;
            d_j += after.j - before.j;
        }
        let common = self.common(x, y) as i64;
        let (d_f1, d_f2) = match mv {
            Move::Add(..) => (1, common),
            Move::Delete(..) => (-1, -common),
            Move::Reverse(..) => (0, 0),
        };
        let c = &self.cfg;
        let total = d_bic
            - c.lambda_top * d_f1 as f64
            - c.lambda_tri * d_f2 as f64
            - c.lambda_sheaf * d_sheaf
            - c.lambda_j * d_j;
        Ok(Some(ScoreDelta {
            total,
            d_bic,
            d_f1,
            d_f2,
            d_sheaf,
            d_j,
            mv,
        }))
    }

    /// Completes an operator's partially directed result to the canonical
    /// extension of its equivalence class.
    fn complete(dir: Adjacency, und: Adjacency) -> Result<Option<Adjacency>> {
        let pd = PartiallyDirectedGraph::new(dir, und)?;
        let Some(ext) = consistent_extension(&pd) else {
            return Ok(None);
        };
        let class = cpdag(&Dag::from_adjacency(ext)?);
        Ok(consistent_extension(&class))
    }

    /// Insert (forward) or delete (backward) operators on the current
    /// equivalence class, as `(move, successor)` pairs in `(x, y, subset)`
    /// order.
    fn class_successors(&self, phase: Phase) -> Result<Vec<(Move, Adjacency)>> {
        let d = self.d();
        let cp = cpdag(&Dag::from_adjacency(self.adj.clone())?);
        let mut out = Vec::new();
        for x in 0..d {
            for y in 0..d {
                if x == y {
                    continue;
                }
                let pool: Vec<usize> = match phase {
                    Phase::Forward if !cp.adjacent(x, y) => (0..d)
                        .filter(|&t| cp.is_undirected(t, y) && !cp.adjacent(t, x))
                        .take(MAX_SUBSET_BITS)
                        .collect(),
                    Phase::Backward if cp.is_directed(x, y) || cp.is_undirected(x, y) => (0..d)
                        .filter(|&h| h != x && cp.is_undirected(h, y) && cp.adjacent(h, x))
                        .take(MAX_SUBSET_BITS)
                        .collect(),
                    _ => continue,
                };
                for mask in 0u32..(1 << pool.len()) {
                    let chosen = pool.iter().enumerate().filter(|&(k, _)| mask >> k & 1 == 1).map(|(_, &t)| t);
                    let mut dir = cp.directed().clone();
                    let mut und = cp.undirected().clone();
                    let mv = match phase {
                        Phase::Forward => {
                            dir.set(x, y, true);
                            for t in chosen {
                                und.set(t, y, false);
                                und.set(y, t, false);
                                dir.set(t, y, true);
                            }
                            Move::Add(x, y)
                        }
                        Phase::Backward => {
                            for (a, b) in [(x, y), (y, x)] {
                                dir.set(a, b, false);
                                und.set(a, b, false);
                            }
                            for h in chosen {
                                und.set(y, h, false);
                                und.set(h, y, false);
                                dir.set(y, h, true);
                                if cp.is_undirected(x, h) {
                                    und.set(x, h, false);
                                    und.set(h, x, false);
                                    dir.set(x, h, true);
                                }
                            }
                            Move::Delete(x, y)
                        }
                    };
                    if let Some(next) = Self::complete(dir, und)? {
                        out.push((mv, next));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Best successor of the phase with its exact score change; earlier
    /// candidates (lower `(x, y)`) win ties. `None` when nothing clears the
    /// acceptance threshold.
    fn best_transition(&mut self, phase: Phase) -> Result<Option<(ScoreDelta, Adjacency)>> {
        let mut best: Option<(ScoreDelta, Adjacency)> = None;
        for (mv, next) in self.class_successors(phase)? {
            let Some(delta) = self.transition_delta(&next, mv)? else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _)| delta.total > b.total) {
                best = Some((delta, next));
            }
        }
        Ok(best.filter(|(b, _)| b.total > ACCEPT_EPS))
    }

    /// Best covered reversal on the current DAG. Only the stability and
    /// gluing penalties can tell members of one class apart, so this is a
    /// no-op without them.
    fn best_turn(&mut self) -> Result<Option<ScoreDelta>> {
        if self.cfg.lambda_sheaf == 0.0 && self.cfg.lambda_j == 0.0 {
            return Ok(None);
        }
        let mut best: Option<ScoreDelta> = None;
        let edges: Vec<(usize, usize)> = self.adj.edges().collect();
        for (u, v) in edges {
            if !self.is_covered(u, v) {
                continue;
            }
            let delta = self.delta(Move::Reverse(u, v))?;
            if !delta.is_rejected() && best.is_none_or(|b| delta.total > b.total) {
                best = Some(delta);
            }
        }
        Ok(best.filter(|b| b.total > ACCEPT_EPS))
    }

    /// Forward insertions, then backward deletions, over equivalence
    /// classes; finally covered reversals settle orientation within the
    /// class when penalties that depend on it are active.
    pub fn run(mut self, labels: &[String]) -> Result<SearchResult> {
        let empty_score = self.score()?;
        let mut running = empty_score;
        let mut log = Vec::new();
        let cap = 4 * self.d() * self.d() + 16;
        let mut record = |log: &mut Vec<Decision>, phase, delta: ScoreDelta| {
            let child = match delta.mv {
                Move::Add(_, v) | Move::Delete(_, v) => v,
                Move::Reverse(u, _) => u,
            };
            running += delta.total;
            log.push(Decision {
                step: log.len() + 1,
                phase,
                child,
                delta,
            });
        };
        for phase in [Phase::Forward, Phase::Backward] {
            let mut steps = 0;
            while let Some((delta, next)) = self.best_transition(phase)? {
                self.set_graph(&next)?;
                record(&mut log, phase, delta);
                steps += 1;
                if steps > cap {
                    log::warn!("{phase:?} phase stopped after {steps} moves");
                    break;
                }
            }
        }
        let mut turns = 0;
        while let Some(delta) = self.best_turn()? {
            self.apply(delta.mv)?;
            record(&mut log, Phase::Backward, delta);
            turns += 1;
            if turns > cap {
                break;
            }
        }
        let dag = Dag::from_adjacency(self.adj.clone())?.with_labels(labels.to_vec())?;
        Ok(SearchResult {
            dag,
            log,
            empty_score,
            score: running,
        })
    }
}

/// Score change of one move under `searcher`'s configuration.
pub fn cges_delta<T: Real>(searcher: &mut Searcher<T>, mv: Move) -> Result<ScoreDelta> {
    searcher.delta(mv)
}

/// Plain GES: every regularization weight in `cfg` is ignored.
pub fn ges_search<T: Real>(data: &MultiRegimeData<T>, cfg: &ScoreConfig) -> Result<SearchResult> {
    let plain = ScoreConfig {
        lambda_top: 0.0,
        lambda_tri: 0.0,
        lambda_sheaf: 0.0,
        lambda_j: 0.0,
        ..cfg.clone()
    };
    Searcher::new(data, &plain)?.run(data.labels())
}

/// Search under the full regularized score in `cfg`.
pub fn tces_search<T: Real>(data: &MultiRegimeData<T>, cfg: &ScoreConfig) -> Result<SearchResult> {
    Searcher::new(data, cfg)?.run(data.labels())
}

/// Regularized score of `dag`, computed from scratch.
pub fn full_score<T: Real>(data: &MultiRegimeData<T>, dag: &Adjacency, cfg: &ScoreConfig) -> Result<f64> {
    let mut s = Searcher::new(data, cfg)?;
    s.set_graph(dag)?;
    s.score()
}

/// Decision log as CSV: `step,move,child,delta_total,delta_bic,
/// lambda_j_delta_j,lambda_sheaf_delta_sheaf`; the last two columns are the
/// signed contributions to `delta_total`.
pub fn write_decision_log<W: Write>(out: W, log: &[Decision], labels: &[String], cfg: &ScoreConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "step",
        "move",
        "child",
        "delta_total",
        "delta_bic",
        "lambda_j_delta_j",
        "lambda_sheaf_delta_sheaf",
    ])?;
    for d in log {
        let (u, v) = d.delta.mv.endpoints();
        let mv = format!("{}:{}->{}", d.delta.mv.kind(), labels[u], labels[v]);
        w.write_record([
            d.step.to_string(),
            mv,
            labels[d.child].clone(),
            format!("{:.6}", d.delta.total),
            format!("{:.6}", d.delta.d_bic),
            format!("{:.6}", -cfg.lambda_j * d.delta.d_j),
            format!("{:.6}", -cfg.lambda_sheaf * d.delta.d_sheaf),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<decision log>", e))?;
    Ok(())
}
