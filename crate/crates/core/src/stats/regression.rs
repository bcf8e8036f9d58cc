//! Least squares and Gaussian BIC local scores.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Linear fit `y ≈ intercept + X beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub coefficients: Vec<T>,
    pub intercept: T,
    /// Mean squared residual (divides by n).
    pub residual_variance: T,
    pub n: usize,
}

/// Ridge-penalized least squares with an unpenalized intercept.
///
/// With `ridge == 0` a numerically singular design is reported as
/// [`Error::SingularFit`]; see [`ols_fit_robust`] for the retrying variant.
pub fn ols_fit<T: Real>(x: &Matrix<T>, y: &[T], ridge: T) -> Result<FitResult<T>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientData("regression on zero rows".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let k = x.cols();
    let nf = T::of_usize(n);
    let y_mean = y.iter().copied().sum::<T>() / nf;
    if k == 0 {
        let var = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum::<T>() / nf;
        return Ok(FitResult {
            coefficients: Vec::new(),
            intercept: y_mean,
            residual_variance: var,
            n,
        });
    }
    let (x_means, xtx) = x.centered_crossprod();
    let mut xty = vec![T::zero(); k];
    for i in 0..n {
        let dy = y[i] - y_mean;
        for (acc, (&xv, &m)) in xty.iter_mut().zip(x.row(i).iter().zip(&x_means)) {
            *acc = *acc + (xv - m) * dy;
        }
    }
    let beta = Cholesky::new(&xtx, ridge)?.solve(&xty);
    let intercept = y_mean - beta.iter().zip(&x_means).map(|(&b, &m)| b * m).sum::<T>();
    let rss: T = (0..n)
        .map(|i| {
            let pred = intercept + x.row(i).iter().zip(&beta).map(|(&a, &b)| a * b).sum::<T>();
            let r = y[i] - pred;
            r * r
        })
        .sum();
    Ok(FitResult {
        coefficients: beta,
        intercept,
        residual_variance: (rss / nf).max(T::zero()),
        n,
    })
}

/// [`ols_fit`] that retries a singular unpenalized system with a ridge of
/// `1e-8 * trace(X'X) / k`.
pub fn ols_fit_robust<T: Real>(x: &Matrix<T>, y: &[T], ridge: T) -> Result<FitResult<T>> {
    match ols_fit(x, y, ridge) {
        Err(Error::SingularFit) if x.cols() > 0 => {
            let (_, xtx) = x.centered_crossprod();
            let r =
                (T::of(1e-8) * xtx.trace() / T::of_usize(x.cols())).max(T::min_positive_value());
            ols_fit(x, y, ridge + r)
        }
        other => other,
    }
}

fn gaussian_bic<T: Real>(rss: T, total_ss: T, n: usize, n_parents: usize) -> Result<T> {
    if !(total_ss > T::zero()) {
        return Err(Error::DegenerateData("zero-variance column".into()));
    }
    let nf = T::of_usize(n);
    // an exact fit would send the log-likelihood to +inf
    let var = (rss / nf).max(total_ss / nf * T::of(1e-12));
    let two_pi = T::of(2.0 * std::f64::consts::PI);
    let half = T::of(0.5);
    let loglik = -half * nf * ((two_pi * var).ln() + T::one());
    let df = T::of_usize(n_parents + 2);
    Ok(loglik - half * nf.ln() * df)
}

/// Gaussian BIC of `v` regressed on `parents` (higher is better):
/// `loglik - (ln n / 2) * (|parents| + 2)`.
pub fn bic_local<T: Real>(data: &Matrix<T>, v: usize, parents: &[usize]) -> Result<T> {
    let d = data.cols();
    for &p in parents.iter().chain(std::iter::once(&v)) {
        if p >= d {
            return Err(Error::IndexOutOfRange { index: p, len: d });
        }
    }
    if parents.contains(&v) {
        return Err(Error::InvalidConfig(format!(
            "node {v} listed as its own parent"
        )));
    }
    let y = data.column(v);
    let x = data.select_columns(parents);
    let fit = ols_fit_robust(&x, &y, T::zero())?;
    let n = data.rows();
    let mean = y.iter().copied().sum::<T>() / T::of_usize(n);
    let tss = y.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>();
    gaussian_bic(
        fit.residual_variance * T::of_usize(n),
        tss,
        n,
        parents.len(),
    )
}

/// BIC scorer backed by the centered cross-product matrix, so each local
/// score costs `O(k^3)` in the parent count instead of a pass over the rows.
#[derive(Debug, Clone)]
pub struct LocalScorer<T> {
    n: usize,
    cross: Matrix<T>,
}

impl<T: Real> LocalScorer<T> {
    pub fn new(data: &Matrix<T>) -> Self {
        let (_, cross) = data.centered_crossprod();
        Self {
            n: data.rows(),
            cross,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.cross.rows()
    }

    /// Residual sum of squares of `v` on `parents`.
    pub fn rss(&self, v: usize, parents: &[usize]) -> Result<T> {
        let syy = self.cross[(v, v)];
        if parents.is_empty() {
            return Ok(syy);
        }
        let spp = self.cross.submatrix(parents);
        let spy: Vec<T> = parents.iter().map(|&p| self.cross[(p, v)]).collect();
        let chol = match Cholesky::new(&spp, T::zero()) {
            Ok(c) => c,
            Err(_) => {
                let r = (T::of(1e-8) * spp.trace() / T::of_usize(parents.len()))
                    .max(T::min_positive_value());
                Cholesky::new(&spp, r)?
            }
        };
        let beta = chol.solve(&spy);
        let explained: T = beta.iter().zip(&spy).map(|(&b, &s)| b * s).sum();
        Ok((syy - explained).max(T::zero()))
    }

    pub fn bic(&self, v: usize, parents: &[usize]) -> Result<T> {
        let rss = self.rss(v, parents)?;
        gaussian_bic(rss, self.cross[(v, v)], self.n, parents.len())
    }
}
