//! π-stable skeletons, net-preference orientation and π selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SupportTable;
use crate::data::MultiRegimeData;
use crate::error::{Error, Result};
use crate::graph::{has_directed_path, Adjacency, PartiallyDirectedGraph};
use crate::scalar::Real;
use crate::stats::ols_fit_robust;

/// Keeps `{i, j}` when `max(F[i][j], F[j][i]) >= pi`.
pub fn pi_skeleton(freq: &[Vec<f64>], pi: f64) -> Result<Adjacency> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidThreshold(format!("pi {pi} outside [0, 1]")));
    }
    let d = freq.len();
    let mut out = Adjacency::new(d);
    for i in 0..d {
        for j in (i + 1)..d {
            if freq[i][j].max(freq[j][i]) >= pi {
                out.set(i, j, true);
                out.set(j, i, true);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationPolicy {
    pub delta_margin: f64,
    /// Directed edges `(from, to)` that must never be emitted.
    pub guards: BTreeSet<(usize, usize)>,
}

impl Default for OrientationPolicy {
    fn default() -> Self {
        Self {
            delta_margin: 0.1,
            guards: BTreeSet::new(),
        }
    }
}

impl OrientationPolicy {
    pub fn new(delta_margin: f64, guards: BTreeSet<(usize, usize)>) -> Result<Self> {
        if !(delta_margin >= 0.0) {
            return Err(Error::InvalidThreshold(format!("negative orientation margin {delta_margin}")));
        }
        if let Some(&(u, v)) = guards.iter().find(|(u, v)| u == v) {
            return Err(Error::InvalidConfig(format!("guard ({u},{v}) is a self-loop")));
        }
        Ok(Self { delta_margin, guards })
    }
}

/// Orients each pair of `base` toward the direction with the larger
/// frequency when the difference reaches the margin and is positive; a
/// guarded direction is never emitted.
pub fn orient_net_preference(freq: &[Vec<f64>], policy: &OrientationPolicy, base: &Adjacency) -> PartiallyDirectedGraph {
    let d = base.n();
    let mut out = PartiallyDirectedGraph::from_skeleton(base);
    for i in 0..d {
        for j in (i + 1)..d {
            if !out.adjacent(i, j) {
                continue;
            }
            let m = freq[i][j] - freq[j][i];
            if m > 0.0 && m >= policy.delta_margin && !policy.guards.contains(&(i, j)) {
                out.orient(i, j);
            } else if -m > 0.0 && -m >= policy.delta_margin && !policy.guards.contains(&(j, i)) {
                out.orient(j, i);
            }
        }
    }
    out
}

/// Net margins `F[i][j] - F[j][i]` and the support curve
/// `#{(u, v) off-diagonal : C[u][v] >= t}` for `t = 0..=E`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub margins: Vec<Vec<f64>>,
    pub curve: Vec<(usize, usize)>,
}

pub fn stability_margin_report(support: &SupportTable) -> MarginReport {
    let d = support.d();
    let margins = (0..d)
        .map(|i| (0..d).map(|j| support.freq[i][j] - support.freq[j][i]).collect())
        .collect();
    let curve = (0..=support.e)
        .map(|t| {
            let n = (0..d)
                .flat_map(|u| (0..d).map(move |v| (u, v)))
                .filter(|&(u, v)| u != v && support.counts[u][v] >= t)
                .count();
            (t, n)
        })
        .collect();
    MarginReport { margins, curve }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiScore {
    pub pi: f64,
    pub edges: usize,
    pub directed: usize,
    /// Undirected edges left out of the parent sets.
    pub dropped_undirected: usize,
    /// Directed edges skipped because they would close a cycle.
    pub dropped_cyclic: usize,
    /// Mean per-row validation log-likelihood.
    pub val_ll: f64,
    /// Standard error of the paired per-row difference to the best candidate.
    pub se_to_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiSelection {
    pub pi: f64,
    pub scores: Vec<PiScore>,
}

/// Parent sets for likelihood scoring: directed edges only, added in order
/// of decreasing margin, skipping any that would close a directed cycle.
fn scoring_dag(freq: &[Vec<f64>], pdag: &PartiallyDirectedGraph) -> (Adjacency, usize) {
    let d = pdag.d();
    let mut edges: Vec<(usize, usize)> = pdag.directed().edges().collect();
    edges.sort_by(|&(a, b), &(c, e)| {
        let ma = freq[a][b] - freq[b][a];
        let mc = freq[c][e] - freq[e][c];
        mc.total_cmp(&ma).then((a, b).cmp(&(c, e)))
    });
    let mut dag = Adjacency::new(d);
    let mut skipped = 0;
    for (u, v) in edges {
        if has_directed_path(&dag, v, u) {
            skipped += 1;
        } else {
            dag.set(u, v, true);
        }
    }
    (dag, skipped)
}

/// Per-row Gaussian log-likelihood of `val` under a linear SEM over `dag`
/// fitted by per-node least squares on `train`.
fn validation_ll<T: Real>(dag: &Adjacency, train: &MultiRegimeData<T>, val: &MultiRegimeData<T>) -> Result<Vec<f64>> {
    let xt = train.pooled();
    let xv = val.pooled();
    let d = train.d();
    let mut ll = vec![0.0; xv.rows()];
    for v in 0..d {
        let pa: Vec<usize> = dag.col_ones(v).collect();
        let y = xt.column(v);
        let (coef, intercept, var) = if pa.is_empty() {
            let n = y.len() as f64;
            let mean = y.iter().map(|t| t.as_f64()).sum::<f64>() / n;
            let var = y.iter().map(|t| (t.as_f64() - mean).powi(2)).sum::<f64>() / n;
            (Vec::new(), mean, var)
        } else {
            let fit = ols_fit_robust(&xt.select_columns(&pa), &y, T::zero())?;
            (
                fit.coefficients.iter().map(|c| c.as_f64()).collect(),
                fit.intercept.as_f64(),
                fit.residual_variance.as_f64(),
            )
        };
        let var = var.max(1e-12);
        let norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        for (r, slot) in ll.iter_mut().enumerate() {
            let row = xv.row(r);
            let pred = intercept + pa.iter().zip(&coef).map(|(&p, c)| c * row[p].as_f64()).sum::<f64>();
            let res = row[v].as_f64() - pred;
            *slot += norm - res * res / (2.0 * var);
        }
    }
    Ok(ll)
}

/// Picks π from `candidates` by held-out log-likelihood.
///
/// Each candidate's graph is the π-stable skeleton oriented by net
/// preference; only its directed edges enter the parent sets. The winner
/// is the largest π whose mean validation log-likelihood is within one
/// standard error (of the paired per-row difference) of the best
/// candidate's, so near-ties resolve toward the sparser graph.
pub fn select_pi<T: Real>(
    freq: &[Vec<f64>],
    candidates: &[f64],
    train: &MultiRegimeData<T>,
    val: &MultiRegimeData<T>,
    policy: &OrientationPolicy,
) -> Result<PiSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("empty π grid".into()));
    }
    if val.n_regimes() == 0 || val.n_total() == 0 {
        return Err(Error::InsufficientData("no validation rows".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    for &pi in candidates {
        let skel = pi_skeleton(freq, pi)?;
        let pdag = orient_net_preference(freq, policy, &skel);
        let (dag, dropped_cyclic) = scoring_dag(freq, &pdag);
        let ll = validation_ll(&dag, train, val)?;
        let mean = ll.iter().sum::<f64>() / ll.len() as f64;
        scores.push(PiScore {
            pi,
            edges: skel.count() / 2,
            directed: pdag.directed().count(),
            dropped_undirected: pdag.undirected().count() / 2,
            dropped_cyclic,
            val_ll: mean,
            se_to_best: 0.0,
        });
        rows.push(ll);
    }
    let best = (0..scores.len())
        .max_by(|&a, &b| {
            scores[a]
                .val_ll
                .total_cmp(&scores[b].val_ll)
                .then(scores[a].pi.total_cmp(&scores[b].pi))
        })
        .expect("nonempty grid");
    let n = rows[best].len() as f64;
    for k in 0..scores.len() {
        let diff: Vec<f64> = rows[k].iter().zip(&rows[best]).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / n;
        let var = diff.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        scores[k].se_to_best = (var / n).sqrt();
    }
    let pi = scores
        .iter()
        .filter(|s| s.val_ll >= scores[best].val_ll - s.se_to_best)
        .map(|s| s.pi)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PiSelection { pi, scores })
}
