//! Constraint-based discovery with regime-aggregated CI decisions.
//!
//! Each CI query is tested separately in every regime, the p-values are
//! combined, and an optional veto turns "independent" into "dependent" when
//! the regimes disagree. Skeleton search is order-independent (adjacency
//! snapshots per level), followed by v-structures and Meek closure.

use std::collections::BTreeMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultiRegimeData;
use crate::error::{Error, Result};
use crate::graph::{meek_closure, orient_v_structures, Adjacency, Dag, PartiallyDirectedGraph, SepSets};
use crate::scalar::Real;
use crate::stats::{aggregate_pvalues, AggregatorKind, CiTest, DSepOracle, FisherZ};

/// When disagreement between regimes overrides an "independent" verdict.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Veto {
    #[default]
    Off,
    /// Fires when the reference regime says independent but another regime
    /// rejects.
    Reference(String),
    /// Fires when any regime rejects.
    AnyRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiDecision {
    pub pair: (usize, usize),
    pub given: Vec<usize>,
    pub per_regime_p: BTreeMap<String, f64>,
    pub p_sheaf: f64,
    pub dependent: bool,
    pub vetoed: bool,
}

/// One CI tester per regime, in regime order.
pub struct CiEnvironments {
    ids: Vec<String>,
    tests: Vec<Box<dyn CiTest + Send>>,
}

impl CiEnvironments {
    pub fn new(ids: Vec<String>, tests: Vec<Box<dyn CiTest + Send>>) -> Result<Self> {
        if ids.len() != tests.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: tests.len(),
            });
        }
        if tests.is_empty() {
            return Err(Error::InsufficientData("no regimes to test in".into()));
        }
        let d = tests[0].n_vars();
        if let Some(t) = tests.iter().find(|t| t.n_vars() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: t.n_vars(),
            });
        }
        Ok(Self { ids, tests })
    }

    /// Fisher-z testers; regimes with a constant column are skipped.
    pub fn fisher_z<T: Real>(data: &MultiRegimeData<T>) -> Result<Self> {
        let mut ids = Vec::new();
        let mut tests: Vec<Box<dyn CiTest + Send>> = Vec::new();
        for r in data.regimes() {
            match FisherZ::new(&r.data) {
                Ok(t) => {
                    ids.push(r.regime_id.clone());
                    tests.push(Box::new(t));
                }
                Err(e) => log::warn!("regime {} skipped for CI testing: {e}", r.regime_id),
            }
        }
        Self::new(ids, tests)
    }

    /// d-separation answers from one DAG per regime.
    pub fn oracle(regimes: Vec<(String, Dag)>) -> Result<Self> {
        let (ids, dags): (Vec<_>, Vec<_>) = regimes.into_iter().unzip();
        let tests = dags
            .into_iter()
            .map(|g| Box::new(DSepOracle::new(g)) as Box<dyn CiTest + Send>)
            .collect();
        Self::new(ids, tests)
    }

    pub fn d(&self) -> usize {
        self.tests[0].n_vars()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tests `i ⟂ j | given` in every regime and combines the evidence.
pub fn jstable_ci_decision(
    envs: &CiEnvironments,
    i: usize,
    j: usize,
    given: &[usize],
    alpha: f64,
    kind: AggregatorKind,
    veto: &Veto,
) -> Result<CiDecision> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidThreshold(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut per_regime_p = BTreeMap::new();
    let mut ps = Vec::with_capacity(envs.len());
    for (id, t) in envs.ids.iter().zip(&envs.tests) {
        match t.pvalue(i, j, given) {
            Ok(p) => {
                per_regime_p.insert(id.clone(), p);
                ps.push((id, p));
            }
            Err(e @ (Error::InsufficientSamples { .. } | Error::DegenerateData(_))) => {
                log::warn!("regime {id} skipped for ({i},{j}|{given:?}): {e}");
            }
            Err(e) => return Err(e),
        }
    }
    if ps.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no regime could test ({i},{j}) given {given:?}"
        )));
    }
    let values: Vec<f64> = ps.iter().map(|&(_, p)| p).collect();
    let p_sheaf = aggregate_pvalues(&values, kind)?.p;
    let mut dependent = p_sheaf <= alpha;
    let any_reject = values.iter().any(|&p| p <= alpha);
    let vetoed = !dependent
        && any_reject
        && match veto {
            Veto::Off => false,
            Veto::AnyRegime => true,
            Veto::Reference(r) => match per_regime_p.get(r) {
                Some(&p0) => p0 > alpha,
                None => {
                    log::warn!("veto reference regime {r} has no p-value for ({i},{j}|{given:?})");
                    false
                }
            },
        };
    dependent |= vetoed;
    Ok(CiDecision {
        pair: (i.min(j), i.max(j)),
        given: given.to_vec(),
        per_regime_p,
        p_sheaf,
        dependent,
        vetoed,
    })
}

/// Settings of one constraint-based run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub alpha: f64,
    /// Largest conditioning-set size.
    pub depth: usize,
    pub kind: AggregatorKind,
    pub veto: Veto,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            depth: 1,
            kind: AggregatorKind::Fisher,
            veto: Veto::Off,
        }
    }
}

/// Looks for a separating set of `(i, j)` among subsets of size `level`
/// of either endpoint's neighbors in `snap`.
fn find_sepset(envs: &CiEnvironments, snap: &Adjacency, i: usize, j: usize, level: usize, cfg: &CiConfig) -> Result<(bool, Option<Vec<usize>>)> {
    let mut tested = false;
    for (x, y) in [(i, j), (j, i)] {
        let nbrs: Vec<usize> = snap.row_ones(x).filter(|&k| k != y).collect();
        if nbrs.len() < level {
            continue;
        }
        for s in nbrs.into_iter().combinations(level) {
            tested = true;
            let dec = jstable_ci_decision(envs, i, j, &s, cfg.alpha, cfg.kind, &cfg.veto)?;
            if !dec.dependent {
                return Ok((true, Some(s)));
            }
        }
    }
    Ok((tested, None))
}

/// PC-style edge elimination from the complete graph, one conditioning-set
/// size at a time up to `depth`. Within a level every pair is tested
/// against the adjacency as it stood when the level began, so the result
/// does not depend on pair order and the tests may run in parallel.
pub fn skeleton_search(envs: &CiEnvironments, cfg: &CiConfig) -> Result<(Adjacency, SepSets)> {
    let d = envs.d();
    let mut adj = Adjacency::complete(d);
    let mut sepsets = SepSets::new();
    for level in 0..=cfg.depth {
        let snap = adj.clone();
        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .filter(|&(i, j)| snap.get(i, j))
            .collect();
        let results = pairs
            .par_iter()
            .map(|&(i, j)| find_sepset(envs, &snap, i, j, level, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut any_tested = false;
        for (&(i, j), (tested, sep)) in pairs.iter().zip(results) {
            any_tested |= tested;
            if let Some(s) = sep {
                adj.set(i, j, false);
                adj.set(j, i, false);
                sepsets.insert(i, j, s);
            }
        }
        if !any_tested {
            break;
        }
    }
    Ok((adj, sepsets))
}

/// V-structures from the separating sets, then Meek closure.
pub fn orient(skel: &Adjacency, sepsets: &SepSets) -> PartiallyDirectedGraph {
    meek_closure(&orient_v_structures(skel, sepsets))
}

#[derive(Debug, Clone)]
pub struct CiResult {
    pub skeleton: Adjacency,
    pub sepsets: SepSets,
    pub pdag: PartiallyDirectedGraph,
}

/// Skeleton search plus orientation over all regimes in `envs` at once.
pub fn ci_discover(envs: &CiEnvironments, cfg: &CiConfig) -> Result<CiResult> {
    let (skeleton, sepsets) = skeleton_search(envs, cfg)?;
    let pdag = orient(&skeleton, &sepsets);
    Ok(CiResult {
        skeleton,
        sepsets,
        pdag,
    })
}

/// Runs the single-regime learner on each regime independently; a failing
/// regime yields its own error without affecting the others.
pub fn discover_per_regime<T: Real>(data: &MultiRegimeData<T>, cfg: &CiConfig) -> Vec<(String, Result<CiResult>)> {
    let single = CiConfig {
        veto: Veto::Off,
        ..cfg.clone()
    };
    data.regimes()
        .par_iter()
        .map(|r| {
            let run = || -> Result<CiResult> {
                let envs = CiEnvironments::new(vec![r.regime_id.clone()], vec![Box::new(FisherZ::new(&r.data)?)])?;
                ci_discover(&envs, &single)
            };
            (r.regime_id.clone(), run())
        })
        .collect()
}
