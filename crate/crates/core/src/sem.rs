//! Linear-Gaussian structural equation models with perfect interventions.
//!
//! DAGs are drawn by permuting the variables and sampling edges uniformly
//! from the pairs that point from a later to an earlier position, so every
//! draw is acyclic. Weights are `±U[0.5, 2.0]` and noise is `N(0, 1)`.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{MultiRegimeData, RegimeDataset, RegimeSpec};
use crate::error::{Error, Result};
use crate::graph::{default_labels, Adjacency, Dag};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::scalar::Real;

pub const WEIGHT_MIN: f64 = 0.5;
pub const WEIGHT_MAX: f64 = 2.0;

/// Weighted DAG with Gaussian noise: `X_j = sum_i W[i][j] X_i + noise_std[j] * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSem<T> {
    pub dag: Dag,
    pub weights: Matrix<T>,
    pub noise_std: Vec<T>,
}

impl<T: Real> LinearSem<T> {
    pub fn new(dag: Dag, weights: Matrix<T>, noise_std: Vec<T>) -> Result<Self> {
        let d = dag.d();
        if weights.rows() != d || weights.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: weights.rows(),
            });
        }
        if noise_std.len() != d || noise_std.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::InvalidConfig(
                "noise std must be positive for every node".into(),
            ));
        }
        for i in 0..d {
            for j in 0..d {
                if !dag.adjacency().get(i, j) && weights[(i, j)] != T::zero() {
                    return Err(Error::InvalidConfig(format!(
                        "weight on non-edge ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self {
            dag,
            weights,
            noise_std,
        })
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    pub fn order(&self) -> &[usize] {
        self.dag.order()
    }

    /// Observational covariance `(I - W)^-T diag(s^2) (I - W)^-1`, by
    /// propagating along the topological order.
    pub fn implied_covariance(&self) -> Matrix<T> {
        let d = self.d();
        // X = B^T X + e with B = W, so X = A e with A = (I - W^T)^-1
        let mut a = Matrix::<T>::zeros(d, d);
        for &v in self.order() {
            for k in 0..d {
                let mut s = if k == v { T::one() } else { T::zero() };
                for p in self.dag.adjacency().col_ones(v) {
                    s = s + self.weights[(p, v)] * a[(p, k)];
                }
                a[(v, k)] = s;
            }
        }
        let mut cov = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = T::zero();
                for k in 0..d {
                    s = s + a[(i, k)] * a[(j, k)] * self.noise_std[k] * self.noise_std[k];
                }
                cov[(i, j)] = s;
            }
        }
        cov
    }
}

/// Random DAG with exactly `floor(density * d)` edges.
pub fn sample_dag(d: usize, density: f64, rng: &mut Rng) -> Result<Dag> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 variables, got {d}"
        )));
    }
    if !(density >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "density must be nonnegative, got {density}"
        )));
    }
    let available = d * (d - 1) / 2;
    let m = (density * d as f64).floor() as usize;
    if m > available {
        return Err(Error::InvalidDensity {
            edges: m,
            available,
        });
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut adj = Adjacency::new(d);
    for k in index::sample(rng, available, m) {
        // k enumerates pairs (a, b) with a > b: row a holds a entries
        let mut a = 1;
        while a * (a + 1) / 2 <= k {
            a += 1;
        }
        let b = k - a * (a - 1) / 2;
        adj.set(perm[a], perm[b], true);
    }
    Dag::from_adjacency(adj)
}

/// Draws `sign * U[0.5, 2.0]` for every edge of `dag`, unit noise.
pub fn sample_weights<T: Real>(dag: &Dag, rng: &mut Rng) -> LinearSem<T> {
    let d = dag.d();
    let mut w = Matrix::zeros(d, d);
    for (i, j) in dag.adjacency().edges() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mag = rng.random_range(WEIGHT_MIN..=WEIGHT_MAX);
        w[(i, j)] = T::of(sign * mag);
    }
    LinearSem::new(dag.clone(), w, vec![T::one(); d]).expect("weights supported on edges")
}

/// Forward-substitutes `n` samples; an intervened node drops its parents and
/// becomes `mean_shift + noise`.
pub fn simulate_regime<T: Real>(
    sem: &LinearSem<T>,
    spec: &RegimeSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<RegimeDataset<T>> {
    let d = sem.d();
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    if let Some(t) = spec.intervention_target {
        if t >= d {
            return Err(Error::IndexOutOfRange { index: t, len: d });
        }
    }
    let parents: Vec<Vec<usize>> = (0..d).map(|v| sem.dag.parents(v)).collect();
    let shift = T::of(spec.mean_shift);
    let mut data = Matrix::zeros(n, d);
    for row in 0..n {
        for &v in sem.order() {
            let eps: f64 = StandardNormal.sample(rng);
            let noise = sem.noise_std[v] * T::of(eps);
            let x = if spec.intervention_target == Some(v) {
                shift + noise
            } else {
                parents[v]
                    .iter()
                    .fold(noise, |acc, &p| acc + sem.weights[(p, v)] * data[(row, p)])
            };
            data[(row, v)] = x;
        }
    }
    RegimeDataset::new(spec.clone(), data)
}

/// Benchmark generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub d: usize,
    pub density: f64,
    pub n_regimes: usize,
    pub n_per: usize,
    pub seed: u64,
    pub mean_shift: f64,
}

impl BenchmarkSpec {
    pub fn new(d: usize, density: f64, n_regimes: usize, n_per: usize, seed: u64) -> Self {
        Self {
            d,
            density,
            n_regimes,
            n_per,
            seed,
            mean_shift: 0.0,
        }
    }

    /// One observational regime `e0` plus `n_regimes - 1` single-node
    /// interventions on distinct targets. Graph, weights and targets come from
    /// stream 0; regime `r` samples from stream `r + 1`.
    pub fn generate<T: Real>(&self) -> Result<MultiRegimeData<T>> {
        if self.n_regimes == 0 {
            return Err(Error::InvalidConfig("need at least one regime".into()));
        }
        if self.n_regimes - 1 > self.d {
            return Err(Error::InvalidConfig(format!(
                "{} interventional regimes but only {} nodes",
                self.n_regimes - 1,
                self.d
            )));
        }
        let mut rng = rng::stream(self.seed, 0);
        let dag = sample_dag(self.d, self.density, &mut rng)?;
        let sem: LinearSem<T> = sample_weights(&dag, &mut rng);
        let targets = index::sample(&mut rng, self.d, self.n_regimes - 1).into_vec();
        let mut regimes = Vec::with_capacity(self.n_regimes);
        for r in 0..self.n_regimes {
            let mut spec = if r == 0 {
                RegimeSpec::observational("e0")
            } else {
                RegimeSpec::intervention(format!("e{r}"), targets[r - 1])
            };
            if r > 0 {
                spec.mean_shift = self.mean_shift;
            }
            let mut rr = rng::stream(self.seed, r as u64 + 1);
            regimes.push(simulate_regime(&sem, &spec, self.n_per, &mut rr)?);
        }
        let labels = default_labels(self.d);
        let truth = dag.with_labels(labels.clone())?;
        MultiRegimeData::new(regimes, labels, Some(truth))
    }

    /// The generated model itself (same draws as [`generate`](Self::generate)).
    pub fn model<T: Real>(&self) -> Result<LinearSem<T>> {
        let mut rng = rng::stream(self.seed, 0);
        let dag = sample_dag(self.d, self.density, &mut rng)?;
        Ok(sample_weights(&dag, &mut rng))
    }
}

/// Shorthand for [`BenchmarkSpec::generate`] with no mean shift.
pub fn make_benchmark<T: Real>(
    d: usize,
    density: f64,
    n_regimes: usize,
    n_per: usize,
    seed: u64,
) -> Result<MultiRegimeData<T>> {
    BenchmarkSpec::new(d, density, n_regimes, n_per, seed).generate()
}
