//! Backdoor adjustment on binned tables, aggregated over a cover of regimes.

use serde::{Deserialize, Serialize};

use crate::data::MultiRegimeData;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pseudo-count added to every cell of an empirical table.
const LAPLACE: f64 = 0.5;

/// Integer-coded rows of one regime; `cards[v]` values per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteData {
    pub regime_id: String,
    pub cards: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
}

impl DiscreteData {
    pub fn new(regime_id: impl Into<String>, cards: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        for row in &rows {
            if row.len() != cards.len() {
                return Err(Error::DimensionMismatch {
                    expected: cards.len(),
                    found: row.len(),
                });
            }
            if let Some((v, &x)) = row.iter().enumerate().find(|&(v, &x)| x >= cards[v]) {
                return Err(Error::IndexOutOfRange { index: x, len: cards[v] });
            }
        }
        Ok(Self {
            regime_id: regime_id.into(),
            cards,
            rows,
        })
    }
}

/// Codes every variable by pooled quantiles into at most `bins` levels.
/// Columns with no more than `bins` distinct values keep one level per
/// value. Cut points are shared by all regimes.
pub fn bin_quantiles<T: Real>(data: &MultiRegimeData<T>, bins: usize) -> Result<Vec<DiscreteData>> {
    if bins < 2 {
        return Err(Error::InvalidConfig("need at least two bins".into()));
    }
    let pooled = data.pooled();
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(data.d());
    for v in 0..data.d() {
        let mut col: Vec<f64> = pooled.column(v).iter().map(|x| x.as_f64()).collect();
        col.sort_by(f64::total_cmp);
        let mut distinct = col.clone();
        distinct.dedup();
        let c = if distinct.len() <= bins {
            // cut between consecutive distinct values
            distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut c: Vec<f64> = (1..bins).map(|k| col[(k * col.len()) / bins]).collect();
            c.dedup();
            c
        };
        cuts.push(c);
    }
    let cards: Vec<usize> = cuts.iter().map(|c| c.len() + 1).collect();
    data.regimes()
        .iter()
        .map(|r| {
            let rows = (0..r.n())
                .map(|i| {
                    r.data
                        .row(i)
                        .iter()
                        .zip(&cuts)
                        .map(|(x, c)| c.partition_point(|&t| t <= x.as_f64()))
                        .collect()
                })
                .collect();
            DiscreteData::new(r.regime_id.clone(), cards.clone(), rows)
        })
        .collect()
}

/// Order-preserving combiner of per-regime estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMean {
    #[default]
    Arithmetic,
    /// Drops `floor(frac * m)` values from each end before averaging.
    Trimmed(f64),
}

impl CoverMean {
    fn combine(&self, mut xs: Vec<f64>) -> f64 {
        let m = xs.len();
        let k = match *self {
            Self::Arithmetic => 0,
            Self::Trimmed(frac) => ((frac.clamp(0.0, 0.5) * m as f64).floor() as usize).min((m - 1) / 2),
        };
        xs.sort_by(f64::total_cmp);
        let kept = &xs[k..m - k];
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

fn regime_adjustment(t: &DiscreteData, x: usize, x_val: usize, y: usize, z: &[usize]) -> Vec<f64> {
    let card_y = t.cards[y];
    let kz: usize = z.iter().map(|&v| t.cards[v]).product();
    let z_index = |row: &[usize]| z.iter().fold(0, |acc, &v| acc * t.cards[v] + row[v]);
    let mut n_z = vec![0.0; kz];
    let mut n_xz = vec![0.0; kz];
    let mut n_yxz = vec![vec![0.0; card_y]; kz];
    for row in &t.rows {
        let zi = z_index(row);
        n_z[zi] += 1.0;
        if row[x] == x_val {
            n_xz[zi] += 1.0;
            n_yxz[zi][row[y]] += 1.0;
        }
    }
    let n = t.rows.len() as f64;
    let mut out = vec![0.0; card_y];
    for zi in 0..kz {
        let pz = (n_z[zi] + LAPLACE) / (n + LAPLACE * kz as f64);
        for (yv, slot) in out.iter_mut().enumerate() {
            let py = (n_yxz[zi][yv] + LAPLACE) / (n_xz[zi] + LAPLACE * card_y as f64);
            *slot += py * pz;
        }
    }
    out
}

/// `p(y | do(x = x_val)) = sum_z p(y | x, z) p(z)`, estimated per cover
/// regime from smoothed empirical frequencies, combined across the cover
/// with `mean`, and renormalized over `y`.
pub fn jdo_backdoor(
    tables: &[DiscreteData],
    cover: &[String],
    x: usize,
    x_val: usize,
    y: usize,
    z: &[usize],
    mean: CoverMean,
) -> Result<Vec<f64>> {
    if cover.is_empty() {
        return Err(Error::EmptyCover);
    }
    let members: Vec<&DiscreteData> = cover
        .iter()
        .map(|id| {
            tables
                .iter()
                .find(|t| &t.regime_id == id)
                .ok_or_else(|| Error::InvalidConfig(format!("cover regime {id} not found")))
        })
        .collect::<Result<_>>()?;
    let cards = &members[0].cards;
    let d = cards.len();
    if members.iter().any(|t| &t.cards != cards) {
        return Err(Error::InvalidConfig("cover regimes disagree on variable levels".into()));
    }
    for &v in z.iter().chain([&x, &y]) {
        if v >= d {
            return Err(Error::IndexOutOfRange { index: v, len: d });
        }
    }
    if x == y || z.contains(&x) || z.contains(&y) {
        return Err(Error::MalformedStatement(format!("x={x}, y={y}, z={z:?} overlap")));
    }
    if x_val >= cards[x] {
        return Err(Error::IndexOutOfRange { index: x_val, len: cards[x] });
    }
    for yv in 0..cards[y] {
        if !members.iter().any(|t| t.rows.iter().any(|r| r[y] == yv)) {
            return Err(Error::UnobservedOutcome(yv));
        }
    }
    let per_regime: Vec<Vec<f64>> = members.iter().map(|t| regime_adjustment(t, x, x_val, y, z)).collect();
    let mut out: Vec<f64> = (0..cards[y])
        .map(|yv| mean.combine(per_regime.iter().map(|p| p[yv]).collect()))
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// `sum_z P(y | x, z) P(z | x)` at `x = x_val`; `kernel[x][z][y]` and
/// `mix[x][z]`.
pub fn mixture_conditional(kernel: &[Vec<Vec<f64>>], mix: &[Vec<f64>], x_val: usize) -> Result<Vec<f64>> {
    let k = kernel
        .get(x_val)
        .ok_or(Error::IndexOutOfRange { index: x_val, len: kernel.len() })?;
    let m = mix
        .get(x_val)
        .ok_or(Error::IndexOutOfRange { index: x_val, len: mix.len() })?;
    if k.len() != m.len() || k.is_empty() {
        return Err(Error::DimensionMismatch { expected: m.len(), found: k.len() });
    }
    let normalized = |p: &[f64]| p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if !normalized(m) {
        return Err(Error::Unnormalized(format!("P(z | x={x_val})")));
    }
    let card_y = k[0].len();
    for (zi, row) in k.iter().enumerate() {
        if row.len() != card_y {
            return Err(Error::DimensionMismatch { expected: card_y, found: row.len() });
        }
        if !normalized(row) {
            return Err(Error::Unnormalized(format!("P(y | x={x_val}, z={zi})")));
        }
    }
    Ok((0..card_y).map(|yv| k.iter().zip(m).map(|(row, w)| row[yv] * w).sum()).collect())
}
