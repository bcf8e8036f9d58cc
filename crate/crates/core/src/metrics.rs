//! Structure-accuracy and stability metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{skeleton, Adjacency, Dag, PartiallyDirectedGraph};

/// How edges are scored: ordered pairs, or unordered pairs of skeletons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Directed,
    #[default]
    Skeleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Confusion {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: b, found: a });
    }
    Ok(())
}

/// Edge confusion of `pred` against `truth`. In skeleton mode both are
/// symmetrized and each unordered pair is scored once.
pub fn confusion(pred: &Adjacency, truth: &Adjacency, mode: ScoreMode) -> Result<Confusion> {
    check_dims(pred.n(), truth.n())?;
    let d = truth.n();
    let (p, t) = match mode {
        ScoreMode::Directed => (pred.clone(), truth.clone()),
        ScoreMode::Skeleton => (skeleton(pred), skeleton(truth)),
    };
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..d {
        for j in 0..d {
            let scored = match mode {
                ScoreMode::Directed => i != j,
                ScoreMode::Skeleton => i < j,
            };
            if !scored {
                continue;
            }
            match (p.get(i, j), t.get(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    Ok(Confusion::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShdBreakdown {
    pub skeleton_diff: usize,
    pub orientation_flips: usize,
    pub shd: usize,
    pub dir_sym: usize,
}

/// Structural Hamming distance between two partially directed graphs.
///
/// Pairs adjacent in exactly one graph are skeleton differences. In
/// directed mode a pair adjacent in both whose marks differ (opposite
/// arrows, or directed against undirected) is one flip; skeleton mode
/// counts no flips.
pub fn shd(pred: &PartiallyDirectedGraph, truth: &PartiallyDirectedGraph, mode: ScoreMode) -> Result<ShdBreakdown> {
    check_dims(pred.d(), truth.d())?;
    let d = truth.d();
    let mut skeleton_diff = 0;
    let mut orientation_flips = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            match (pred.adjacent(i, j), truth.adjacent(i, j)) {
                (true, true) => {
                    let same = pred.is_directed(i, j) == truth.is_directed(i, j)
                        && pred.is_directed(j, i) == truth.is_directed(j, i);
                    if mode == ScoreMode::Directed && !same {
                        orientation_flips += 1;
                    }
                }
                (false, false) => {}
                _ => skeleton_diff += 1,
            }
        }
    }
    Ok(ShdBreakdown {
        skeleton_diff,
        orientation_flips,
        shd: skeleton_diff + orientation_flips,
        dir_sym: skeleton_diff + 2 * orientation_flips,
    })
}

/// [`shd`] against a DAG taken edge for edge.
pub fn shd_to_dag(pred: &PartiallyDirectedGraph, truth: &Dag, mode: ScoreMode) -> Result<ShdBreakdown> {
    shd(pred, &PartiallyDirectedGraph::from_directed(truth.adjacency()), mode)
}

/// The metric block written to reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricBlock {
    pub mode: ScoreMode,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(flatten)]
    pub shd: ShdBreakdown,
}

/// Confusion and SHD in one call; undirected predicted edges count in both
/// directions for the directed confusion.
pub fn evaluate(pred: &PartiallyDirectedGraph, truth: &PartiallyDirectedGraph, mode: ScoreMode) -> Result<MetricBlock> {
    Ok(MetricBlock {
        mode,
        confusion: confusion(&pred.to_adjacency(), &truth.to_adjacency(), mode)?,
        shd: shd(pred, truth, mode)?,
    })
}

/// `|a ∩ b| / |a ∪ b|` over off-diagonal entries; 1 when both are empty.
pub fn jaccard(a: &Adjacency, b: &Adjacency) -> Result<f64> {
    check_dims(a.n(), b.n())?;
    let (mut inter, mut uni) = (0usize, 0usize);
    for i in 0..a.n() {
        for j in 0..a.n() {
            if i == j {
                continue;
            }
            let (x, y) = (a.get(i, j), b.get(i, j));
            inter += usize::from(x && y);
            uni += usize::from(x || y);
        }
    }
    Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
}

const STAB_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityIndex {
    pub value: f64,
    /// Largest per-edge variance of this run, the normalizer.
    pub var_max: f64,
}

/// `1 - mean_edges Var_r[s_r] / (Var^max + eps)`, clipped to `[0, 1]`.
/// `scores[k]` holds one edge's score in each regime; variances are
/// population variances and `Var^max` is the largest of them.
pub fn stability_index(scores: &[Vec<f64>]) -> Result<StabilityIndex> {
    if scores.is_empty() || scores.iter().any(Vec::is_empty) {
        return Err(Error::InsufficientData("stability index needs at least one edge and one regime".into()));
    }
    let vars: Vec<f64> = scores
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len() as f64
        })
        .collect();
    let var_max = vars.iter().copied().fold(0.0, f64::max);
    let mean_ratio = vars.iter().map(|v| v / (var_max + STAB_EPS)).sum::<f64>() / vars.len() as f64;
    Ok(StabilityIndex {
        value: (1.0 - mean_ratio).clamp(0.0, 1.0),
        var_max,
    })
}

/// `x ⟂ y | given`; equal up to swapping `x` and `y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CiStatement {
    pub x: usize,
    pub y: usize,
    pub given: BTreeSet<usize>,
}

impl CiStatement {
    pub fn new(x: usize, y: usize, given: impl IntoIterator<Item = usize>) -> Self {
        Self {
            x: x.min(y),
            y: x.max(y),
            given: given.into_iter().collect(),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.x == self.y || self.given.contains(&self.x) || self.given.contains(&self.y) {
            return Err(Error::MalformedStatement(format!("{self:?}")));
        }
        if let Some(&v) = [self.x, self.y].iter().chain(&self.given).find(|&&v| v >= d) {
            return Err(Error::MalformedStatement(format!("variable {v} outside 0..{d}")));
        }
        Ok(())
    }
}

/// Local Markov statements `X ⟂ v | Pa(v)` for every `X` that is neither a
/// parent nor a descendant of `v`.
pub fn local_markov(graph: &Dag) -> BTreeSet<CiStatement> {
    let mut out = BTreeSet::new();
    for v in 0..graph.d() {
        let pa = graph.parents(v);
        let desc = graph.descendants(v);
        for x in 0..graph.d() {
            if x != v && !desc[x] && !pa.contains(&x) {
                out.insert(CiStatement::new(x, v, pa.iter().copied()));
            }
        }
    }
    out
}

/// `(Δ_sound, Δ_complete)`: the share of graph-implied local Markov
/// statements missing from `ci_j`, and the share of `ci_j` the graph does
/// not imply. An empty denominator gives 0.
pub fn soundness_completeness(graph: &Dag, ci_j: &[CiStatement]) -> Result<(f64, f64)> {
    for s in ci_j {
        s.validate(graph.d())?;
    }
    let observed: BTreeSet<CiStatement> = ci_j.iter().map(|s| CiStatement::new(s.x, s.y, s.given.iter().copied())).collect();
    let implied = local_markov(graph);
    let share = |a: &BTreeSet<CiStatement>, b: &BTreeSet<CiStatement>| {
        if a.is_empty() {
            0.0
        } else {
            a.difference(b).count() as f64 / a.len() as f64
        }
    };
    Ok((share(&implied, &observed), share(&observed, &implied)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::d_separated;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reported_confusion_rows() {
        let c = Confusion::from_counts(2, 20, 0, 0);
        assert!(close(c.precision, 0.091, 5e-4) && c.recall == 1.0 && close(c.f1, 0.167, 5e-4));
        let c = Confusion::from_counts(6, 14, 0, 0);
        assert!(close(c.precision, 0.30, 5e-4) && c.recall == 1.0 && close(c.f1, 0.462, 5e-4));
        let c = Confusion::from_counts(0, 0, 3, 5);
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_prediction() {
        let a = Adjacency::from_edges(4, &[(0, 1), (1, 2), (3, 2)]);
        for mode in [ScoreMode::Directed, ScoreMode::Skeleton] {
            let c = confusion(&a, &a, mode).unwrap();
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        let c = confusion(&a, &a, ScoreMode::Directed).unwrap();
        assert_eq!(c.tp + c.fp + c.fn_ + c.tn, 12);
        let c = confusion(&a, &a, ScoreMode::Skeleton).unwrap();
        assert_eq!(c.tp + c.fp + c.fn_ + c.tn, 6);
    }

    #[test]
    fn one_reversed_edge() {
        let t = Dag::from_adjacency(Adjacency::from_edges(3, &[(0, 1), (1, 2)])).unwrap();
        let p = PartiallyDirectedGraph::from_directed(&Adjacency::from_edges(3, &[(0, 1), (2, 1)]));
        let s = shd_to_dag(&p, &t, ScoreMode::Directed).unwrap();
        assert_eq!((s.skeleton_diff, s.orientation_flips, s.shd, s.dir_sym), (0, 1, 1, 2));
        assert_eq!(shd_to_dag(&p, &t, ScoreMode::Skeleton).unwrap().shd, 0);
    }

    #[test]
    fn skeleton_shd_counts_false_positives() {
        // twenty spurious pairs and no misses on a 9-node graph with 2 true edges
        let t = Dag::from_adjacency(Adjacency::from_edges(9, &[(0, 1), (2, 3)])).unwrap();
        let mut edges = vec![(0, 1), (2, 3)];
        let mut k = 0;
        'outer: for i in 0..9 {
            for j in (i + 1)..9 {
                if (i, j) != (0, 1) && (i, j) != (2, 3) {
                    edges.push((i, j));
                    k += 1;
                    if k == 20 {
                        break 'outer;
                    }
                }
            }
        }
        let p = PartiallyDirectedGraph::from_skeleton(&skeleton(&Adjacency::from_edges(9, &edges)));
        let m = evaluate(&p, &PartiallyDirectedGraph::from_directed(t.adjacency()), ScoreMode::Skeleton).unwrap();
        assert_eq!((m.confusion.tp, m.confusion.fp, m.confusion.fn_), (2, 20, 0));
        assert_eq!(m.shd.shd, 20);
        assert!(close(m.confusion.f1, 0.167, 5e-4));
    }

    #[test]
    fn undirected_over_directed_is_a_flip() {
        let t = PartiallyDirectedGraph::from_directed(&Adjacency::from_edges(2, &[(0, 1)]));
        let p = PartiallyDirectedGraph::from_skeleton(&Adjacency::complete(2));
        let s = shd(&p, &t, ScoreMode::Directed).unwrap();
        assert_eq!((s.skeleton_diff, s.orientation_flips), (0, 1));
    }

    #[test]
    fn jaccard_cases() {
        let a = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        let b = Adjacency::from_edges(3, &[(2, 0)]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.0);
        assert_eq!(jaccard(&Adjacency::new(3), &Adjacency::new(3)).unwrap(), 1.0);
        assert!(close(14.0 / 428.0, 0.033, 5e-4));
    }

    #[test]
    fn stability_cases() {
        assert_eq!(stability_index(&[vec![0.3, 0.3], vec![1.0, 1.0]]).unwrap().value, 1.0);
        let s = stability_index(&[vec![0.0, 1.0], vec![0.5, 0.5], vec![0.2, 0.2], vec![1.0, 1.0]]).unwrap();
        assert!(close(s.value, 0.75, 1e-8));
        assert_eq!(s.var_max, 0.25);
        assert!(stability_index(&[]).is_err());
    }

    #[test]
    fn stability_matches_direct_formula() {
        use rand::Rng;
        let mut r = crate::rng::stream(3, 0);
        for _ in 0..100 {
            let e = r.random_range(1..8);
            let scores: Vec<Vec<f64>> = (0..r.random_range(1..10)).map(|_| (0..e).map(|_| r.random()).collect()).collect();
            // two-pass variance written out separately from the library's
            let var = |s: &Vec<f64>| {
                let n = s.len() as f64;
                let sq: f64 = s.iter().map(|x| x * x).sum();
                let m: f64 = s.iter().sum::<f64>() / n;
                (sq / n - m * m).max(0.0)
            };
            let vs: Vec<f64> = scores.iter().map(var).collect();
            let vmax = vs.iter().cloned().fold(0.0, f64::max);
            let direct = (1.0 - vs.iter().map(|v| v / (vmax + 1e-9)).sum::<f64>() / vs.len() as f64).clamp(0.0, 1.0);
            assert!(close(stability_index(&scores).unwrap().value, direct, 1e-9));
        }
    }

    #[test]
    fn soundness_trivial_cases() {
        let g = Dag::from_adjacency(Adjacency::from_edges(3, &[(0, 1), (1, 2)])).unwrap();
        let implied: Vec<CiStatement> = local_markov(&g).into_iter().collect();
        assert_eq!(soundness_completeness(&g, &implied).unwrap(), (0.0, 0.0));
        assert_eq!(soundness_completeness(&g, &[]).unwrap(), (1.0, 0.0));
        assert!(matches!(
            soundness_completeness(&g, &[CiStatement::new(0, 1, [1])]),
            Err(Error::MalformedStatement(_))
        ));
    }

    #[test]
    fn soundness_against_dsep_oracle() {
        for seed in 0..30 {
            let mut r = crate::rng::stream(seed, 4);
            let g = crate::sem::sample_dag(5, 1.2, &mut r).unwrap();
            let mut ci = Vec::new();
            for v in 0..5 {
                let pa = g.parents(v);
                for x in (0..5).filter(|&x| x != v && !pa.contains(&x)) {
                    if d_separated(&g, x, v, &pa).unwrap() {
                        ci.push(CiStatement::new(x, v, pa.iter().copied()));
                    }
                }
            }
            assert_eq!(soundness_completeness(&g, &ci).unwrap(), (0.0, 0.0));
        }
    }

    fn arb_pdag(d: usize) -> impl Strategy<Value = PartiallyDirectedGraph> {
        proptest::collection::vec(0u8..4, d * (d - 1) / 2).prop_map(move |marks| {
            let mut dir = Adjacency::new(d);
            let mut und = Adjacency::new(d);
            let mut k = 0;
            for i in 0..d {
                for j in (i + 1)..d {
                    match marks[k] {
                        1 => dir.set(i, j, true),
                        2 => dir.set(j, i, true),
                        3 => {
                            und.set(i, j, true);
                            und.set(j, i, true);
                        }
                        _ => {}
                    }
                    k += 1;
                }
            }
            PartiallyDirectedGraph::new(dir, und).unwrap()
        })
    }

    proptest! {
        #[test]
        fn shd_identities(a in arb_pdag(6), b in arb_pdag(6)) {
            let s = shd(&a, &b, ScoreMode::Directed).unwrap();
            prop_assert_eq!(s.shd, s.skeleton_diff + s.orientation_flips);
            prop_assert_eq!(s.dir_sym, s.skeleton_diff + 2 * s.orientation_flips);
            prop_assert_eq!(s.shd == 0, a == b);
        }

        #[test]
        fn directed_confusion_margins(a in arb_pdag(5), b in arb_pdag(5)) {
            let (pa, ta) = (a.directed().clone(), b.directed().clone());
            let c = confusion(&pa, &ta, ScoreMode::Directed).unwrap();
            prop_assert_eq!(c.tp + c.fn_, ta.count());
            prop_assert_eq!(c.tp + c.fp, pa.count());
            prop_assert_eq!(jaccard(&pa, &ta).unwrap(), jaccard(&ta, &pa).unwrap());
        }
    }
}
