//! Small dense linear algebra: a row-major matrix and a Cholesky solver.
//!
//! Problem sizes here are tiny (a node and its parents, a handful of
//! conditioning variables), so nothing beyond an unblocked factorization is
//! needed.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (k, &j) in cols.iter().enumerate() {
                out[(i, k)] = src[j];
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: p.cols,
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column_means(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (acc, &x) in m.iter_mut().zip(self.row(i)) {
                *acc = *acc + x;
            }
        }
        let n = T::of_usize(self.rows.max(1));
        m.iter_mut().for_each(|x| *x = *x / n);
        m
    }

    /// Centered cross-product matrix `(X - mean)^T (X - mean)`.
    pub fn centered_crossprod(&self) -> (Vec<T>, Matrix<T>) {
        let means = self.column_means();
        let k = self.cols;
        let mut s = Matrix::zeros(k, k);
        let mut centered = vec![T::zero(); k];
        for i in 0..self.rows {
            for (c, (&x, &m)) in centered.iter_mut().zip(self.row(i).iter().zip(&means)) {
                *c = x - m;
            }
            for a in 0..k {
                let ca = centered[a];
                if ca == T::zero() {
                    continue;
                }
                for b in a..k {
                    s.data[a * k + b] = s.data[a * k + b] + ca * centered[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                s.data[a * k + b] = s.data[b * k + a];
            }
        }
        (means, s)
    }

    /// Maximum-likelihood covariance (divides by n).
    pub fn covariance(&self) -> (Vec<T>, Matrix<T>) {
        let (means, mut s) = self.centered_crossprod();
        let n = T::of_usize(self.rows.max(1));
        s.data.iter_mut().for_each(|x| *x = *x / n);
        (means, s)
    }

    /// Returns a copy with every column z-scored; constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let means = self.column_means();
        let n = T::of_usize(self.rows.max(1));
        let mut sd = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (j, &x) in self.row(i).iter().enumerate() {
                let dx = x - means[j];
                sd[j] = sd[j] + dx * dx;
            }
        }
        for s in &mut sd {
            *s = (*s / n).sqrt();
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let dx = out.data[i * self.cols + j] - means[j];
                out.data[i * self.cols + j] = if sd[j] > T::zero() { dx / sd[j] } else { dx };
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a + ridge * I`.
    pub fn new(a: &Matrix<T>, ridge: T) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.cols(),
            });
        }
        let mut l = Matrix::zeros(n, n);
        // relative pivot floor; anything below is numerically singular
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(T::zero(), T::max);
        let tol = scale * T::epsilon() * T::of(16.0);
        for j in 0..n {
            let mut d = a[(j, j)] + ridge;
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) || !d.is_finite() {
                return Err(Error::SingularFit);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// `log det(A)`.
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.l.rows()).map(|i| two * self.l[(i, i)].ln()).sum()
    }
}

/// Solves `a x = b` for SPD `a`; on failure retries once with a scale-aware ridge
/// of `1e-8 * trace(a) / k`.
pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    match Cholesky::new(a, T::zero()) {
        Ok(c) => Ok(c.solve(b)),
        Err(_) => {
            let k = a.rows().max(1);
            let ridge = T::of(1e-8) * a.trace() / T::of_usize(k);
            Cholesky::new(a, ridge.max(T::min_positive_value())).map(|c| c.solve(b))
        }
    }
}
