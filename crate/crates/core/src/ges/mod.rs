//! Greedy score-based search: plain GES, the topology-regularized CGES
//! variant, the invariance/gluing-regularized TCES variant, and bootstrap
//! edge frequencies. All four share one equivalence-class search whose
//! candidate moves are scored on canonical consistent extensions.

mod bootstrap;
mod penalty;
mod search;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ges, EdgeFrequencies};
pub use penalty::{tces_jstab_local, tces_sheaf_local};
pub use search::{
    cges_delta, full_score, ges_search, tces_search, write_decision_log, Decision, Phase, SearchResult, Searcher,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SheafMetric {
    Mmd,
    Energy,
    GaussKl,
}

impl std::str::FromStr for SheafMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmd" => Ok(Self::Mmd),
            "energy" => Ok(Self::Energy),
            "gauss_kl" | "kl" => Ok(Self::GaussKl),
            other => Err(Error::Parse(format!("unknown sheaf metric {other:?}"))),
        }
    }
}

/// Weights and knobs of the regularized score
/// `sum_v [BIC(v|Pa) - λ_sheaf L_sheaf(v) - λ_j L_j(v)] - λ_top f1 - λ_tri f2`,
/// where `f1` counts skeleton edges and `f2` skeleton triangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub lambda_top: f64,
    pub lambda_tri: f64,
    pub lambda_sheaf: f64,
    pub lambda_j: f64,
    /// Maximum number of parents per node.
    pub d_max: usize,
    pub sheaf_metric: SheafMetric,
    pub sheaf_splits: usize,
    pub sheaf_min_overlap: usize,
    /// Row cap per split half; pairwise discrepancies are quadratic in rows.
    pub sheaf_max_rows: usize,
    /// z-score the pooled data before scoring.
    pub standardize: bool,
    /// Number of contiguous row folds standing in for environments when the
    /// data carry a single regime.
    pub pseudo_env_folds: usize,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            lambda_top: 0.0,
            lambda_tri: 0.0,
            lambda_sheaf: 0.0,
            lambda_j: 0.0,
            d_max: 8,
            sheaf_metric: SheafMetric::Energy,
            sheaf_splits: 2,
            sheaf_min_overlap: 1,
            sheaf_max_rows: 256,
            standardize: true,
            pseudo_env_folds: 5,
            seed: 0,
        }
    }
}

impl ScoreConfig {
    /// Unregularized GES.
    pub fn ges() -> Self {
        Self::default()
    }

    pub fn cges(lambda_top: f64, lambda_tri: f64) -> Self {
        Self {
            lambda_top,
            lambda_tri,
            ..Self::default()
        }
    }

    pub fn tces(lambda_sheaf: f64, lambda_j: f64) -> Self {
        Self {
            lambda_sheaf,
            lambda_j,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max < 1 {
            return Err(Error::InvalidConfig("d_max must be at least 1".into()));
        }
        for (name, v) in [
            ("lambda_top", self.lambda_top),
            ("lambda_tri", self.lambda_tri),
            ("lambda_sheaf", self.lambda_sheaf),
            ("lambda_j", self.lambda_j),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be a finite non-negative number")));
            }
        }
        if self.lambda_sheaf > 0.0 && self.sheaf_splits == 0 {
            return Err(Error::InvalidConfig("sheaf_splits must be positive".into()));
        }
        if self.pseudo_env_folds < 2 {
            return Err(Error::InvalidConfig("pseudo_env_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// A single-edge operator; `(u, v)` always names the edge `u -> v` as it
/// stands before the move (for `Add`, as it will stand after).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

impl Move {
    pub fn endpoints(&self) -> (usize, usize) {
        match *self {
            Move::Add(u, v) | Move::Delete(u, v) | Move::Reverse(u, v) => (u, v),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Move::Add(..) => "add",
            Move::Delete(..) => "delete",
            Move::Reverse(..) => "reverse",
        }
    }
}

/// Change in the regularized score caused by one move.
///
/// `d_sheaf` and `d_j` are raw penalty increases (after minus before), so
/// `total = d_bic - λ_top d_f1 - λ_tri d_f2 - λ_sheaf d_sheaf - λ_j d_j`.
/// A move exceeding the indegree cap carries `total = -inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreDelta {
    pub total: f64,
    pub d_bic: f64,
    pub d_f1: i64,
    pub d_f2: i64,
    pub d_sheaf: f64,
    pub d_j: f64,
    #[serde(rename = "move")]
    pub mv: Move,
}

impl ScoreDelta {
    pub fn rejected(mv: Move) -> Self {
        Self {
            total: f64::NEG_INFINITY,
            d_bic: 0.0,
            d_f1: 0,
            d_f2: 0,
            d_sheaf: 0.0,
            d_j: 0.0,
            mv,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.total == f64::NEG_INFINITY
    }
}
