//! Conditional-independence tests.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::graph::{d_separated, Dag};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// A test of `X_i ⟂ X_j | X_S` returning a p-value.
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;
    fn pvalue(&self, i: usize, j: usize, given: &[usize]) -> Result<f64>;
}

/// Two-sided Fisher-z p-value for a partial correlation `r` estimated from
/// `n` rows with `k` conditioning variables.
pub fn fisher_z_pvalue(r: f64, n: usize, k: usize) -> Result<f64> {
    if n < k + 4 {
        return Err(Error::InsufficientSamples { n, cond: k });
    }
    if !r.is_finite() {
        return Err(Error::DegenerateData(format!("partial correlation {r}")));
    }
    if r.abs() >= 1.0 - 1e-12 {
        return Ok(0.0);
    }
    let z = ((n - k - 3) as f64).sqrt() * r.atanh();
    Ok(erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// Gaussian CI tester over a cached correlation matrix; each query inverts
/// only the `(|S| + 2)`-dimensional submatrix.
#[derive(Debug, Clone)]
pub struct FisherZ {
    n: usize,
    corr: Matrix<f64>,
}

impl FisherZ {
    pub fn new<T: Real>(data: &Matrix<T>) -> Result<Self> {
        let (_, cov) = data.covariance();
        let d = cov.cols();
        let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].as_f64().sqrt()).collect();
        if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateData(format!(
                "column {j} has zero variance"
            )));
        }
        let mut corr = Matrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                corr[(a, b)] = if a == b {
                    1.0
                } else {
                    cov[(a, b)].as_f64() / (sd[a] * sd[b])
                };
            }
        }
        Ok(Self {
            n: data.rows(),
            corr,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn correlation(&self) -> &Matrix<f64> {
        &self.corr
    }

    pub fn partial_correlation(&self, i: usize, j: usize, given: &[usize]) -> Result<f64> {
        let d = self.corr.rows();
        for &x in given.iter().chain([i, j].iter()) {
            if x >= d {
                return Err(Error::IndexOutOfRange { index: x, len: d });
            }
        }
        if given.is_empty() {
            return Ok(self.corr[(i, j)]);
        }
        let mut idx = vec![i, j];
        idx.extend_from_slice(given);
        let sub = self.corr.submatrix(&idx);
        let chol = match Cholesky::new(&sub, 0.0) {
            Ok(c) => c,
            Err(_) => Cholesky::new(&sub, 1e-10)?,
        };
        let p = chol.inverse();
        Ok((-p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt()).clamp(-1.0, 1.0))
    }
}

impl CiTest for FisherZ {
    fn n_vars(&self) -> usize {
        self.corr.rows()
    }

    fn pvalue(&self, i: usize, j: usize, given: &[usize]) -> Result<f64> {
        if self.n < given.len() + 4 {
            return Err(Error::InsufficientSamples {
                n: self.n,
                cond: given.len(),
            });
        }
        let r = self.partial_correlation(i, j, given)?;
        fisher_z_pvalue(r, self.n, given.len())
    }
}

/// One-shot Fisher-z test on raw data.
pub fn fisher_z_test<T: Real>(
    data: &Matrix<T>,
    i: usize,
    j: usize,
    given: &[usize],
) -> Result<f64> {
    let mut cols = vec![i, j];
    cols.extend_from_slice(given);
    let d = data.cols();
    if let Some(&bad) = cols.iter().find(|&&c| c >= d) {
        return Err(Error::IndexOutOfRange { index: bad, len: d });
    }
    let tester = FisherZ::new(&data.select_columns(&cols))?;
    let rest: Vec<usize> = (2..cols.len()).collect();
    tester.pvalue(0, 1, &rest)
}

/// Exact answers from a known DAG: p = 1 when d-separated, 0 otherwise.
#[derive(Debug, Clone)]
pub struct DSepOracle {
    dag: Dag,
}

impl DSepOracle {
    pub fn new(dag: Dag) -> Self {
        Self { dag }
    }
}

impl CiTest for DSepOracle {
    fn n_vars(&self) -> usize {
        self.dag.d()
    }

    fn pvalue(&self, i: usize, j: usize, given: &[usize]) -> Result<f64> {
        Ok(if d_separated(&self.dag, i, j, given)? {
            1.0
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn known_z_and_p() {
        let z = 97f64.sqrt() * 0.5f64.atanh();
        assert!((z - 5.410).abs() < 1e-3);
        let p = fisher_z_pvalue(0.5, 100, 0).unwrap();
        assert!((p - 6.3e-8).abs() < 0.1e-8, "{p}");
    }

    #[test]
    fn edge_values() {
        assert_eq!(fisher_z_pvalue(0.0, 50, 2).unwrap(), 1.0);
        assert_eq!(fisher_z_pvalue(1.0, 50, 2).unwrap(), 0.0);
        assert_eq!(fisher_z_pvalue(-1.0, 50, 2).unwrap(), 0.0);
        assert!(matches!(
            fisher_z_pvalue(0.3, 5, 2),
            Err(Error::InsufficientSamples { n: 5, cond: 2 })
        ));
    }

    fn chain(n: usize, seed: u64) -> Matrix<f64> {
        let mut r = rng::stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut r);
                let e1: f64 = StandardNormal.sample(&mut r);
                let e2: f64 = StandardNormal.sample(&mut r);
                let b = a + e1;
                vec![a, b, b + e2]
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn chain_partial_correlation() {
        let x = chain(5000, 1);
        let t = FisherZ::new(&x).unwrap();
        assert!(t.partial_correlation(0, 2, &[1]).unwrap().abs() < 0.05);
        assert!(t.pvalue(0, 2, &[]).unwrap() < 1e-10);
        assert_eq!(
            fisher_z_test(&x, 0, 2, &[1]).unwrap(),
            t.pvalue(0, 2, &[1]).unwrap()
        );
    }

    #[test]
    fn partial_correlation_matches_residual_oracle() {
        // correlation of residuals after regressing both ends on the middle
        let x = chain(400, 7);
        let resid = |col: usize| -> Vec<f64> {
            let m = x.column(1);
            let y = x.column(col);
            let mm = m.iter().sum::<f64>() / m.len() as f64;
            let my = y.iter().sum::<f64>() / y.len() as f64;
            let sxy: f64 = m.iter().zip(&y).map(|(a, b)| (a - mm) * (b - my)).sum();
            let sxx: f64 = m.iter().map(|a| (a - mm).powi(2)).sum();
            let b = sxy / sxx;
            m.iter()
                .zip(&y)
                .map(|(a, c)| (c - my) - b * (a - mm))
                .collect()
        };
        let (u, v) = (resid(0), resid(2));
        let num: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let den =
            (u.iter().map(|a| a * a).sum::<f64>() * v.iter().map(|a| a * a).sum::<f64>()).sqrt();
        let got = FisherZ::new(&x)
            .unwrap()
            .partial_correlation(0, 2, &[1])
            .unwrap();
        assert!((got - num / den).abs() < 1e-10);
    }

    #[test]
    fn null_pvalues_roughly_uniform() {
        let mut below = 0;
        for seed in 0..400 {
            let mut r = rng::stream(seed, 9);
            let rows: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| StandardNormal.sample(&mut r)).collect())
                .collect();
            let m = Matrix::from_rows(&rows).unwrap();
            if fisher_z_test(&m, 0, 1, &[2]).unwrap() <= 0.05 {
                below += 1;
            }
        }
        assert!((8..=35).contains(&below), "{below} rejections out of 400");
    }

    #[test]
    fn oracle_answers() {
        let dag = Dag::from_adjacency(Adjacency::from_edges(3, &[(0, 1), (1, 2)])).unwrap();
        let o = DSepOracle::new(dag);
        assert_eq!(o.pvalue(0, 2, &[1]).unwrap(), 1.0);
        assert_eq!(o.pvalue(0, 2, &[]).unwrap(), 0.0);
    }
}
