//! Local penalty terms of the regularized score.

use rand::seq::SliceRandom;

use super::{ScoreConfig, SheafMetric};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Real;
use crate::stats::{energy_distance, gaussian_sym_kl, mmd, ols_fit_robust};

/// Coefficient drift of `v` on `parents` across environments:
/// `sum_{e < e'} |beta_e - beta_e'|_2`, with per-environment least squares.
///
/// The data are used as given; callers wanting scale-free coefficients
/// standardize the pooled data once beforehand.
pub fn tces_jstab_local<T: Real>(envs: &[Matrix<T>], v: usize, parents: &[usize]) -> Result<T> {
    if envs.is_empty() {
        return Err(Error::InvalidConfig("no environments for the stability penalty".into()));
    }
    if parents.is_empty() || envs.len() == 1 {
        return Ok(T::zero());
    }
    let mut betas = Vec::with_capacity(envs.len());
    for (e, m) in envs.iter().enumerate() {
        if m.rows() < parents.len() + 2 {
            return Err(Error::InsufficientSamples {
                n: m.rows(),
                cond: parents.len(),
            });
        }
        let x = m.select_columns(parents);
        let fit = ols_fit_robust(&x, &m.column(v), T::zero())
            .map_err(|err| Error::DegenerateRegime(format!("environment {e}: {err}")))?;
        betas.push(fit.coefficients);
    }
    let mut total = T::zero();
    for a in 0..betas.len() {
        for b in (a + 1)..betas.len() {
            let sq: T = betas[a]
                .iter()
                .zip(&betas[b])
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum();
            total = total + sq.sqrt();
        }
    }
    Ok(total)
}

fn divergence<T: Real>(metric: SheafMetric, a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    match metric {
        SheafMetric::Mmd => mmd(a, b, None),
        SheafMetric::Energy => energy_distance(a, b),
        SheafMetric::GaussKl => gaussian_sym_kl(a, b),
    }
}

/// Gluing penalty of the star cover of `U = {v} ∪ parents`.
///
/// Each chart drops one member of `U`; for every pair of charts whose overlap
/// still contains `v` and has at least `sheaf_min_overlap` variables, the
/// chosen discrepancy between two random row halves restricted to the
/// overlap is averaged over `sheaf_splits` splits, then summed over pairs.
/// Splits are drawn from a substream keyed by `(seed, v, parents)`, so the
/// value is a pure function of its arguments.
pub fn tces_sheaf_local<T: Real>(data: &Matrix<T>, v: usize, parents: &[usize], cfg: &ScoreConfig) -> Result<T> {
    let mut parents = parents.to_vec();
    parents.sort_unstable();
    if parents.len() < 2 || cfg.sheaf_splits == 0 {
        // fewer than three members leaves no overlap containing v
        return Ok(T::zero());
    }
    let n = data.rows();
    if n < 4 {
        return Ok(T::zero());
    }
    let overlap_size = parents.len() - 1;
    if overlap_size < cfg.sheaf_min_overlap.max(1) {
        return Ok(T::zero());
    }
    let overlaps: Vec<Vec<usize>> = {
        let mut out = Vec::new();
        for a in 0..parents.len() {
            for b in (a + 1)..parents.len() {
                let mut o: Vec<usize> = parents
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != a && k != b)
                    .map(|(_, &p)| p)
                    .collect();
                o.push(v);
                out.push(o);
            }
        }
        out
    };

    let mut key = vec![cfg.seed, v as u64];
    key.extend(parents.iter().map(|&p| p as u64));
    let mut r = rng::stream(cfg.seed, rng::stream_id(&key));
    let half = (n / 2).min(cfg.sheaf_max_rows.max(2));
    let mut idx: Vec<usize> = (0..n).collect();
    let mut sums = vec![T::zero(); overlaps.len()];
    let mut counts = vec![0usize; overlaps.len()];
    for _ in 0..cfg.sheaf_splits {
        idx.shuffle(&mut r);
        let first = data.select_rows(&idx[..half]);
        let second = data.select_rows(&idx[n - half..]);
        for (k, o) in overlaps.iter().enumerate() {
            match divergence(cfg.sheaf_metric, &first.select_columns(o), &second.select_columns(o)) {
                Ok(x) => {
                    sums[k] = sums[k] + x;
                    counts[k] += 1;
                }
                Err(e) => log::debug!("sheaf overlap {o:?} skipped: {e}"),
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .filter(|&(_, &c)| c > 0)
        .map(|(&s, &c)| s / T::of_usize(c))
        .sum())
}
