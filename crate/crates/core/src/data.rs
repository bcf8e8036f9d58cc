//! Multi-regime datasets.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Generating conditions of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub regime_id: String,
    pub intervention_target: Option<usize>,
    pub mean_shift: f64,
}

impl RegimeSpec {
    pub fn observational(id: impl Into<String>) -> Self {
        Self {
            regime_id: id.into(),
            intervention_target: None,
            mean_shift: 0.0,
        }
    }

    pub fn intervention(id: impl Into<String>, target: usize) -> Self {
        Self {
            regime_id: id.into(),
            intervention_target: Some(target),
            mean_shift: 0.0,
        }
    }
}

/// Samples from one regime: `n x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeDataset<T> {
    pub regime_id: String,
    pub data: Matrix<T>,
    pub spec: RegimeSpec,
}

impl<T: Real> RegimeDataset<T> {
    pub fn new(spec: RegimeSpec, data: Matrix<T>) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::InsufficientData(format!(
                "regime {} has no rows",
                spec.regime_id
            )));
        }
        Ok(Self {
            regime_id: spec.regime_id.clone(),
            data,
            spec,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }
}

/// A dataset partitioned into regimes over shared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRegimeData<T> {
    regimes: Vec<RegimeDataset<T>>,
    labels: Vec<String>,
    truth: Option<Dag>,
}

impl<T: Real> MultiRegimeData<T> {
    pub fn new(
        regimes: Vec<RegimeDataset<T>>,
        labels: Vec<String>,
        truth: Option<Dag>,
    ) -> Result<Self> {
        let d = labels.len();
        let mut seen = std::collections::HashSet::new();
        for r in &regimes {
            if r.data.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.data.cols(),
                });
            }
            if !seen.insert(r.regime_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate regime id {}",
                    r.regime_id
                )));
            }
        }
        if let Some(t) = &truth {
            if t.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: t.d(),
                });
            }
        }
        Ok(Self {
            regimes,
            labels,
            truth,
        })
    }

    /// One regime holding all of `data`.
    pub fn single(data: Matrix<T>, labels: Vec<String>) -> Result<Self> {
        let r = RegimeDataset::new(RegimeSpec::observational("pooled"), data)?;
        Self::new(vec![r], labels, None)
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn regimes(&self) -> &[RegimeDataset<T>] {
        &self.regimes
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn truth(&self) -> Option<&Dag> {
        self.truth.as_ref()
    }

    pub fn n_total(&self) -> usize {
        self.regimes.iter().map(RegimeDataset::n).sum()
    }

    /// Row-concatenation of all regimes in order.
    pub fn pooled(&self) -> Matrix<T> {
        let parts: Vec<&Matrix<T>> = self.regimes.iter().map(|r| &r.data).collect();
        if parts.is_empty() {
            return Matrix::zeros(0, self.d());
        }
        Matrix::vstack(&parts).expect("regimes share the column count")
    }

    /// The whole dataset as a single regime named `pooled`.
    pub fn as_pooled(&self) -> Result<Self> {
        let mut out = Self::single(self.pooled(), self.labels.clone())?;
        out.truth = self.truth.clone();
        Ok(out)
    }

    /// Keeps the regimes for which `keep` is true.
    pub fn filter_regimes(&self, mut keep: impl FnMut(&RegimeDataset<T>) -> bool) -> Self {
        Self {
            regimes: self.regimes.iter().filter(|r| keep(r)).cloned().collect(),
            labels: self.labels.clone(),
            truth: self.truth.clone(),
        }
    }

    /// Per-regime contiguous row split: the first `train_frac` of each
    /// regime's rows go to the first output, the rest to the second.
    pub fn split_rows(&self, train_frac: f64) -> Result<(Self, Self)> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for r in &self.regimes {
            let n = r.n();
            let cut =
                ((n as f64 * train_frac).round() as usize).clamp(1, n.saturating_sub(1).max(1));
            if cut >= n {
                return Err(Error::InsufficientData(format!(
                    "regime {} has too few rows to split",
                    r.regime_id
                )));
            }
            let head: Vec<usize> = (0..cut).collect();
            let tail: Vec<usize> = (cut..n).collect();
            train.push(RegimeDataset::new(
                r.spec.clone(),
                r.data.select_rows(&head),
            )?);
            val.push(RegimeDataset::new(
                r.spec.clone(),
                r.data.select_rows(&tail),
            )?);
        }
        Ok((
            Self::new(train, self.labels.clone(), self.truth.clone())?,
            Self::new(val, self.labels.clone(), self.truth.clone())?,
        ))
    }

    /// Column-wise z-scoring inside each regime.
    pub fn standardized_within_regimes(&self) -> Self {
        Self {
            regimes: self
                .regimes
                .iter()
                .map(|r| RegimeDataset {
                    regime_id: r.regime_id.clone(),
                    data: r.data.standardized(),
                    spec: r.spec.clone(),
                })
                .collect(),
            labels: self.labels.clone(),
            truth: self.truth.clone(),
        }
    }

    /// Writes the dataset CSV: variable labels plus a trailing `env` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        header.push("env");
        w.write_record(&header)?;
        for r in &self.regimes {
            for i in 0..r.n() {
                let mut rec: Vec<String> = r
                    .data
                    .row(i)
                    .iter()
                    .map(|x| format!("{}", x.as_f64()))
                    .collect();
                rec.push(r.regime_id.clone());
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MultiRegimeData<f64> {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
            vec![7.0, 8.0],
        ])
        .unwrap();
        let b = Matrix::from_rows(&[vec![0.5, 0.25], vec![1.5, 1.25]]).unwrap();
        MultiRegimeData::new(
            vec![
                RegimeDataset::new(RegimeSpec::observational("e0"), a).unwrap(),
                RegimeDataset::new(RegimeSpec::intervention("e1", 1), b).unwrap(),
            ],
            vec!["x".into(), "y".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn pooled_concatenates_in_order() {
        let m = tiny();
        let p = m.pooled();
        assert_eq!(p.rows(), 6);
        assert_eq!(p.row(4), &[0.5, 0.25]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let r = RegimeDataset::new(RegimeSpec::observational("e"), a).unwrap();
        assert!(MultiRegimeData::new(vec![r.clone(), r], vec!["x".into()], None).is_err());
    }

    #[test]
    fn split_keeps_every_regime() {
        let (tr, va) = tiny().split_rows(0.75).unwrap();
        assert_eq!(tr.regimes()[0].n(), 3);
        assert_eq!(va.regimes()[0].n(), 1);
        assert_eq!(tr.regimes()[1].n() + va.regimes()[1].n(), 2);
    }

    #[test]
    fn csv_has_env_column() {
        let mut buf = Vec::new();
        tiny().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,y,env\n1,2,e0\n"));
        assert!(s.ends_with("1.5,1.25,e1\n"));
    }
}
