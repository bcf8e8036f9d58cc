//! Combining per-regime p-values into one verdict.
//!
//! All combiners are monotone in every coordinate, permutation invariant and
//! return 1 on an all-ones input; Fisher, Stouffer and Tippett also go to 0
//! when any input does.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    /// `1 - F_{chi2, 2m}(-2 sum ln p)`.
    Fisher,
    /// `2 Phi(-(1/sqrt m) sum Phi^-1(1 - p/2))`.
    Stouffer,
    /// Sidak-calibrated minimum `1 - (1 - min p)^m`.
    Tippett,
    /// Arithmetic mean.
    Mean,
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fisher" => Ok(Self::Fisher),
            "stouffer" => Ok(Self::Stouffer),
            "tippett" => Ok(Self::Tippett),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Parse(format!("unknown aggregator {other:?}"))),
        }
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Fisher => "fisher",
            Self::Stouffer => "stouffer",
            Self::Tippett => "tippett",
            Self::Mean => "mean",
        };
        f.write_str(s)
    }
}

/// Combined p-value; `clamped` is set when a zero input was raised to the
/// smallest positive double.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregated {
    pub p: f64,
    pub clamped: bool,
}

pub fn aggregate_pvalues(ps: &[f64], kind: AggregatorKind) -> Result<Aggregated> {
    if ps.is_empty() {
        return Err(Error::InvalidConfig("no p-values to aggregate".into()));
    }
    let mut clamped = false;
    let mut clean = Vec::with_capacity(ps.len());
    for &p in ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("p-value {p} outside [0, 1]")));
        }
        if p == 0.0 {
            clamped = true;
            clean.push(f64::MIN_POSITIVE);
        } else {
            clean.push(p);
        }
    }
    if clamped {
        log::debug!("zero p-value clamped to {:e}", f64::MIN_POSITIVE);
    }
    if clean.len() == 1 {
        return Ok(Aggregated { p: ps[0], clamped });
    }
    let m = clean.len() as f64;
    let p = match kind {
        AggregatorKind::Fisher => {
            let stat: f64 = -2.0 * clean.iter().map(|p| p.ln()).sum::<f64>();
            ChiSquared::new(2.0 * m).expect("positive df").sf(stat)
        }
        AggregatorKind::Stouffer => {
            let normal = Normal::standard();
            let s: f64 = clean
                .iter()
                .map(|p| normal.inverse_cdf(1.0 - p / 2.0))
                .sum();
            2.0 * normal.cdf(-s / m.sqrt())
        }
        AggregatorKind::Tippett => {
            let min = clean.iter().copied().fold(1.0, f64::min);
            -(m * (-min).ln_1p()).exp_m1()
        }
        AggregatorKind::Mean => clean.iter().sum::<f64>() / m,
    };
    Ok(Aggregated {
        p: p.clamp(0.0, 1.0),
        clamped,
    })
}
