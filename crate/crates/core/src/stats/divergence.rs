//! Two-sample discrepancies used by the sheaf penalty.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

fn check_pair<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: b.cols(),
        });
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::InsufficientData(
            "empty sample in two-sample discrepancy".into(),
        ));
    }
    Ok(())
}

fn factor<T: Real>(cov: &Matrix<T>) -> Result<Cholesky<T>> {
    Cholesky::new(cov, T::zero()).or_else(|_| {
        let k = cov.rows().max(1);
        let ridge = (T::of(1e-8) * cov.trace() / T::of_usize(k)).max(T::of(1e-12));
        Cholesky::new(cov, ridge).map_err(|_| Error::DegenerateOverlap)
    })
}

fn kl<T: Real>(ma: &[T], ca: &Matrix<T>, la: &Cholesky<T>, mb: &[T], lb: &Cholesky<T>) -> T {
    let k = ma.len();
    let inv_b = lb.inverse();
    let mut tr = T::zero();
    for i in 0..k {
        for j in 0..k {
            tr = tr + inv_b[(i, j)] * ca[(j, i)];
        }
    }
    let diff: Vec<T> = mb.iter().zip(ma).map(|(&x, &y)| x - y).collect();
    let sol = lb.solve(&diff);
    let quad: T = diff.iter().zip(&sol).map(|(&x, &y)| x * y).sum();
    T::of(0.5) * (tr + quad - T::of_usize(k) + lb.log_det() - la.log_det())
}

/// Symmetrized KL divergence `(KL(a||b) + KL(b||a)) / 2` between Gaussian
/// fits to the two samples. Covariances that are not positive definite get a
/// small ridge; if that still fails the overlap is reported degenerate.
pub fn gaussian_sym_kl<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    check_pair(a, b)?;
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::DegenerateOverlap);
    }
    let (ma, ca) = a.covariance();
    let (mb, cb) = b.covariance();
    let la = factor(&ca)?;
    let lb = factor(&cb)?;
    let v = T::of(0.5) * (kl(&ma, &ca, &la, &mb, &lb) + kl(&mb, &cb, &lb, &ma, &la));
    Ok(v.max(T::zero()))
}

fn dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt()
}

fn mean_pairwise<T: Real>(a: &Matrix<T>, b: &Matrix<T>, f: impl Fn(&[T], &[T]) -> T) -> T {
    let mut s = T::zero();
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            s = s + f(a.row(i), b.row(j));
        }
    }
    s / T::of_usize(a.rows() * b.rows())
}

/// Energy distance `2 E|A-B| - E|A-A'| - E|B-B'|` with all expectations
/// taken over every row pair, diagonal included. This form is exactly zero
/// for identical samples and never negative.
pub fn energy_distance<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    check_pair(a, b)?;
    let ab = mean_pairwise(a, b, dist);
    let aa = mean_pairwise(a, a, dist);
    let bb = mean_pairwise(b, b, dist);
    Ok((T::of(2.0) * ab - aa - bb).max(T::zero()))
}

/// Median of pairwise distances over the pooled sample; 1 if that is zero.
pub fn median_heuristic<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let pooled = Matrix::vstack(&[a, b]).expect("same width");
    let n = pooled.rows();
    let mut ds: Vec<T> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            ds.push(dist(pooled.row(i), pooled.row(j)));
        }
    }
    if ds.is_empty() {
        return T::one();
    }
    ds.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let m = ds[ds.len() / 2];
    if m > T::zero() {
        m
    } else {
        T::one()
    }
}

/// Biased squared MMD with a Gaussian kernel `exp(-|x-y|^2 / (2 h^2))`;
/// `bandwidth = None` uses the median heuristic.
pub fn mmd<T: Real>(a: &Matrix<T>, b: &Matrix<T>, bandwidth: Option<T>) -> Result<T> {
    check_pair(a, b)?;
    let h = bandwidth.unwrap_or_else(|| median_heuristic(a, b));
    if !(h > T::zero()) {
        return Err(Error::InvalidConfig(
            "MMD bandwidth must be positive".into(),
        ));
    }
    let denom = T::of(2.0) * h * h;
    let k = |x: &[T], y: &[T]| {
        let d = dist(x, y);
        (-(d * d) / denom).exp()
    };
    let v = mean_pairwise(a, a, k) + mean_pairwise(b, b, k) - T::of(2.0) * mean_pairwise(a, b, k);
    Ok(v.max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample(n: usize, k: usize, shift: f64, scale: f64, seed: u64) -> Matrix<f64> {
        let mut r = rng::stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        shift + scale * z
                    })
                    .collect()
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn identical_samples_are_zero() {
        let a = sample(60, 2, 0.0, 1.0, 1);
        assert!(gaussian_sym_kl(&a, &a).unwrap().abs() < 1e-10);
        assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
        assert!(mmd(&a, &a, None).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_of_unit_mean_shift_in_1d() {
        // two unit-variance Gaussians one apart have symmetric KL 1/2
        let a = sample(20000, 1, 0.0, 1.0, 2);
        let b = sample(20000, 1, 1.0, 1.0, 3);
        let v = gaussian_sym_kl(&a, &b).unwrap();
        assert!((v - 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn kl_closed_form_for_scale_change() {
        // variances 1 and 4: KL(a||b) = (1/4 - 1 + ln 4)/2, KL(b||a) = (4 - 1 - ln 4)/2
        let want = 0.5 * (0.5 * (0.25 - 1.0 + 4f64.ln()) + 0.5 * (4.0 - 1.0 - 4f64.ln()));
        let a = sample(40000, 1, 0.0, 1.0, 4);
        let b = sample(40000, 1, 0.0, 2.0, 5);
        let v = gaussian_sym_kl(&a, &b).unwrap();
        assert!((v - want).abs() < 0.05 * want, "{v} vs {want}");
    }

    #[test]
    fn shift_is_detected_by_sample_discrepancies() {
        let a = sample(150, 2, 0.0, 1.0, 6);
        let same = sample(150, 2, 0.0, 1.0, 7);
        let moved = sample(150, 2, 1.5, 1.0, 8);
        assert!(energy_distance(&a, &moved).unwrap() > 5.0 * energy_distance(&a, &same).unwrap());
        assert!(mmd(&a, &moved, None).unwrap() > 5.0 * mmd(&a, &same, None).unwrap());
    }

    #[test]
    fn energy_matches_hand_computation() {
        let a = Matrix::from_rows(&[vec![0.0f64], vec![1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0]]).unwrap();
        // E|A-B| = 2.5, E|A-A'| = 0.5, E|B-B'| = 0
        assert!((energy_distance(&a, &b).unwrap() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_overlap() {
        let a = Matrix::from_rows(&[vec![1.0f64, 1.0]]).unwrap();
        assert!(matches!(
            gaussian_sym_kl(&a, &a),
            Err(Error::DegenerateOverlap)
        ));
    }
}
