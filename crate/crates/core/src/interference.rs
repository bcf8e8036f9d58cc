//! Two-plant interference simulation with wind-sector regime covers.
//!
//! Two plants are switched on at random; each resident exposure is the
//! plant output carried by a wind-dependent weight, and the outcome is a
//! linear function of both exposures. Regimes are wind sectors and a
//! low-mixing condition; edges `E1 -> Y` and `E2 -> Y` are scored by how
//! often a standardized regression on contiguous time shards finds them.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::stats::ols_fit;

/// Closed angular interval in degrees, running counter-clockwise from
/// `lo` to `hi` (wrapping through 0 when `lo > hi`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub lo: f64,
    pub hi: f64,
}

impl Sector {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, theta: f64) -> bool {
        let t = theta.rem_euclid(360.0);
        if self.lo <= self.hi {
            (self.lo..=self.hi).contains(&t)
        } else {
            t >= self.lo || t <= self.hi
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo).rem_euclid(360.0)
    }

    pub fn center(&self) -> f64 {
        (self.lo + self.width() / 2.0).rem_euclid(360.0)
    }

    pub fn within(&self, outer: &Sector) -> bool {
        outer.contains(self.lo) && outer.contains(self.hi) && self.width() <= outer.width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConfig {
    pub t: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Standard deviation of the exposure noise.
    pub eta_sd: f64,
    /// Standard deviation of the outcome noise.
    pub eps_sd: f64,
    pub west_large: Sector,
    pub west_small: Sector,
    pub east: Sector,
    /// Low mixing means `M` below this value.
    pub mixing_threshold: f64,
    /// Extra weight under low mixing, as a fraction of the base weight.
    pub low_mixing_boost: f64,
    pub k: usize,
    pub tau_beta: f64,
    pub pi: f64,
    pub seed: u64,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        Self {
            t: 20_000,
            beta1: 1.0,
            beta2: 1.0,
            eta_sd: 0.05,
            eps_sd: 0.5,
            west_large: Sector::new(230.0, 310.0),
            west_small: Sector::new(250.0, 290.0),
            east: Sector::new(70.0, 110.0),
            mixing_threshold: -0.5,
            low_mixing_boost: 0.5,
            k: 10,
            tau_beta: 0.2,
            pi: 0.8,
            seed: 0,
        }
    }
}

impl InterferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 100 {
            return Err(Error::InvalidConfig(format!("T = {} is below 100", self.t)));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig("need at least two charts per regime".into()));
        }
        if !(self.tau_beta > 0.0) {
            return Err(Error::InvalidThreshold("tau_beta must be positive".into()));
        }
        if !self.west_small.within(&self.west_large) {
            return Err(Error::InvalidConfig("small west sector must lie inside the large one".into()));
        }
        if !(self.eta_sd >= 0.0 && self.eps_sd >= 0.0) {
            return Err(Error::InvalidConfig("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    /// Weight carrying plant output toward the resident: a cosine bump
    /// centred on the plant's downwind sector, boosted under low mixing.
    fn weight(&self, sector: &Sector, theta: f64, m: f64) -> f64 {
        let bump = (theta - sector.center()).to_radians().cos().max(0.0);
        let boost = if m < self.mixing_threshold { 1.0 + self.low_mixing_boost } else { 1.0 };
        bump * boost
    }
}

/// Simulated time series.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSeries {
    pub z1: Vec<u8>,
    pub z2: Vec<u8>,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub y: Vec<f64>,
}

impl ExposureSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Draws the series: fair-coin treatments, uniform wind direction,
/// standard normal mixing, then the exposure and outcome equations.
pub fn simulate_interference(cfg: &InterferenceConfig) -> Result<ExposureSeries> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, rng::stream_id(&[cfg.seed, 0x1f]));
    let eta = Normal::new(0.0, cfg.eta_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let eps = Normal::new(0.0, cfg.eps_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let n = cfg.t;
    let mut s = ExposureSeries {
        z1: Vec::with_capacity(n),
        z2: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        e1: Vec::with_capacity(n),
        e2: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let z1 = u8::from(r.random_bool(0.5));
        let z2 = u8::from(r.random_bool(0.5));
        let theta = r.random_range(0.0..360.0);
        let m: f64 = StandardNormal.sample(&mut r);
        // plant 1 reaches the resident on westerly wind, plant 2 on easterly
        let e1 = cfg.weight(&cfg.west_large, theta, m) * f64::from(z1) + eta.sample(&mut r);
        let e2 = cfg.weight(&cfg.east, theta, m) * f64::from(z2) + eta.sample(&mut r);
        let y = cfg.beta1 * e1 + cfg.beta2 * e2 + eps.sample(&mut r);
        s.z1.push(z1);
        s.z2.push(z2);
        s.theta.push(theta);
        s.m.push(m);
        s.e1.push(e1);
        s.e2.push(e2);
        s.y.push(y);
    }
    Ok(s)
}

pub const COVERS: [&str; 6] = ["WL", "WS", "E", "LM", "WL∩LM", "E∩LM"];

/// Time indices of each cover; empty covers are dropped with a warning.
pub fn regime_masks(series: &ExposureSeries, cfg: &InterferenceConfig) -> BTreeMap<String, Vec<usize>> {
    let idx = |pred: &dyn Fn(usize) -> bool| (0..series.len()).filter(|&t| pred(t)).collect::<Vec<_>>();
    let wl = |t: usize| cfg.west_large.contains(series.theta[t]);
    let ws = |t: usize| cfg.west_small.contains(series.theta[t]);
    let e = |t: usize| cfg.east.contains(series.theta[t]);
    let lm = |t: usize| series.m[t] < cfg.mixing_threshold;
    let masks = [
        idx(&wl),
        idx(&ws),
        idx(&e),
        idx(&lm),
        idx(&|t| wl(t) && lm(t)),
        idx(&|t| e(t) && lm(t)),
    ];
    COVERS
        .iter()
        .zip(masks)
        .filter_map(|(name, mask)| {
            if mask.is_empty() {
                log::warn!("cover {name} is empty and is left out");
                None
            } else {
                Some((name.to_string(), mask))
            }
        })
        .collect()
}

/// Edge frequencies of one cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartFrequencies {
    pub f_e1y: f64,
    pub f_e2y: f64,
    /// Standardized `(beta_E1, beta_E2)` of each fitted chart.
    pub charts: Vec<(f64, f64)>,
    /// Charts that could not be fitted.
    pub skipped: usize,
}

fn chart_fit(series: &ExposureSeries, rows: &[usize]) -> Result<(f64, f64)> {
    let x = Matrix::from_columns(&[
        rows.iter().map(|&t| series.e1[t]).collect(),
        rows.iter().map(|&t| series.e2[t]).collect(),
        rows.iter().map(|&t| series.y[t]).collect(),
    ])?
    .standardized();
    let fit = ols_fit(&x.select_columns(&[0, 1]), &x.column(2), 0.0)?;
    Ok((fit.coefficients[0], fit.coefficients[1]))
}

/// Splits `mask` into `k` contiguous shards, fits a standardized
/// `Y ~ E1 + E2` on each, and reports the share of fitted shards with
/// `|beta| >= tau_beta` per edge.
pub fn chart_frequencies(series: &ExposureSeries, mask: &[usize], k: usize, tau_beta: f64) -> Result<ChartFrequencies> {
    if k == 0 || mask.len() < 2 * k {
        return Err(Error::InsufficientData(format!("{} rows cannot form {k} charts", mask.len())));
    }
    let size = mask.len() / k;
    let fits: Vec<Result<(f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|c| {
            let end = if c + 1 == k { mask.len() } else { (c + 1) * size };
            chart_fit(series, &mask[c * size..end])
        })
        .collect();
    let mut charts = Vec::with_capacity(k);
    let mut skipped = 0;
    for f in fits {
        match f {
            Ok(b) if b.0.is_finite() && b.1.is_finite() => charts.push(b),
            Ok(_) | Err(_) => skipped += 1,
        }
    }
    if charts.is_empty() {
        return Err(Error::InsufficientData("no chart could be fitted".into()));
    }
    if skipped > 0 {
        log::warn!("{skipped} of {k} charts skipped");
    }
    let share = |pick: fn(&(f64, f64)) -> f64| {
        charts.iter().filter(|b| pick(b).abs() >= tau_beta).count() as f64 / charts.len() as f64
    };
    Ok(ChartFrequencies {
        f_e1y: share(|b| b.0),
        f_e2y: share(|b| b.1),
        charts,
        skipped,
    })
}

/// An edge is stable on a cover family when its frequency reaches `pi`
/// in every member; returns `(E1 -> Y, E2 -> Y)`.
pub fn stability_decision<'a>(freqs: impl IntoIterator<Item = &'a ChartFrequencies>, pi: f64) -> (bool, bool) {
    freqs
        .into_iter()
        .fold((true, true), |(a, b), f| (a && f.f_e1y >= pi, b && f.f_e2y >= pi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverResult {
    pub cover: String,
    pub size: usize,
    #[serde(flatten)]
    pub freqs: ChartFrequencies,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterferenceReport {
    pub covers: Vec<CoverResult>,
    /// Stability of `(E1 -> Y, E2 -> Y)` over the west covers.
    pub west_stable: (bool, bool),
    /// Stability of `(E1 -> Y, E2 -> Y)` over the east covers.
    pub east_stable: (bool, bool),
}

impl InterferenceReport {
    pub fn cover(&self, name: &str) -> Option<&CoverResult> {
        self.covers.iter().find(|c| c.cover == name)
    }

    /// `cover,size,f_E1_Y,f_E2_Y` rows.
    pub fn write_frequencies<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cover", "size", "f_E1_Y", "f_E2_Y"])?;
        for c in &self.covers {
            w.write_record([
                c.cover.clone(),
                c.size.to_string(),
                c.freqs.f_e1y.to_string(),
                c.freqs.f_e2y.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("interference_frequencies.csv", e))?;
        Ok(())
    }

    /// `cover,chart,beta_E1,beta_E2` rows.
    pub fn write_charts<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cover", "chart", "beta_E1", "beta_E2"])?;
        for c in &self.covers {
            for (k, (b1, b2)) in c.freqs.charts.iter().enumerate() {
                w.write_record([c.cover.clone(), k.to_string(), b1.to_string(), b2.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("charts.csv", e))?;
        Ok(())
    }
}

/// Simulates, builds the covers and scores every one of them.
pub fn run_interference(cfg: &InterferenceConfig) -> Result<InterferenceReport> {
    let series = simulate_interference(cfg)?;
    let masks = regime_masks(&series, cfg);
    let mut covers = Vec::new();
    for name in COVERS {
        let Some(mask) = masks.get(name) else { continue };
        match chart_frequencies(&series, mask, cfg.k, cfg.tau_beta) {
            Ok(freqs) => covers.push(CoverResult {
                cover: name.to_string(),
                size: mask.len(),
                freqs,
            }),
            Err(e) => log::warn!("cover {name} left out: {e}"),
        }
    }
    let family = |names: &[&str]| {
        stability_decision(
            covers.iter().filter(|c| names.contains(&c.cover.as_str())).map(|c| &c.freqs),
            cfg.pi,
        )
    };
    let west_stable = family(&["WL", "WS", "WL∩LM"]);
    let east_stable = family(&["E", "E∩LM"]);
    Ok(InterferenceReport {
        covers,
        west_stable,
        east_stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> InterferenceConfig {
        InterferenceConfig {
            t: 10_000,
            seed,
            ..InterferenceConfig::default()
        }
    }

    #[test]
    fn sector_membership() {
        let cfg = InterferenceConfig::default();
        assert!(cfg.west_large.contains(270.0) && cfg.west_small.contains(270.0));
        assert!(cfg.east.contains(90.0) && !cfg.west_large.contains(90.0));
        assert!(Sector::new(350.0, 10.0).contains(0.0) && !Sector::new(350.0, 10.0).contains(180.0));
        assert_eq!(Sector::new(350.0, 10.0).center(), 0.0);
        assert!(InterferenceConfig {
            west_small: Sector::new(200.0, 240.0),
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn masks_follow_membership_and_nesting() {
        let cfg = small(1);
        let s = simulate_interference(&cfg).unwrap();
        let m = regime_masks(&s, &cfg);
        assert!(m["WS"].len() <= m["WL"].len());
        assert!(m["WS"].iter().all(|t| m["WL"].binary_search(t).is_ok()));
        for &t in &m["WL∩LM"] {
            assert!(cfg.west_large.contains(s.theta[t]) && s.m[t] < -0.5);
        }
        assert!(m["E"].iter().all(|&t| !cfg.west_large.contains(s.theta[t])));
    }

    #[test]
    fn noiseless_outcome_is_exact() {
        let cfg = InterferenceConfig {
            eta_sd: 0.0,
            eps_sd: 0.0,
            beta1: 0.7,
            beta2: -1.3,
            ..small(2)
        };
        let s = simulate_interference(&cfg).unwrap();
        for t in 0..s.len() {
            assert!((s.y[t] - (0.7 * s.e1[t] - 1.3 * s.e2[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta2_leaves_no_partial_correlation() {
        let s = simulate_interference(&InterferenceConfig { beta2: 0.0, ..small(3) }).unwrap();
        let all: Vec<usize> = (0..s.len()).collect();
        let (_, b2) = chart_fit(&s, &all).unwrap();
        assert!(b2.abs() < 0.03, "{b2}");
    }

    #[test]
    fn treatment_effect_depends_on_wind() {
        let cfg = small(4);
        let s = simulate_interference(&cfg).unwrap();
        let m = regime_masks(&s, &cfg);
        // effect of switching plant 1 on, inside a sector, with its standard error
        let contrast = |mask: &[usize]| {
            let group = |z: u8| {
                let ys: Vec<f64> = mask.iter().filter(|&&t| s.z1[t] == z).map(|&t| s.y[t]).collect();
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (mean, var / n)
            };
            let ((m1, v1), (m0, v0)) = (group(1), group(0));
            (m1 - m0, v1 + v0)
        };
        let (cw, vw) = contrast(&m["WL"]);
        let (ce, ve) = contrast(&m["E"]);
        assert!((cw - ce) / (vw + ve).sqrt() > 4.0);
    }

    #[test]
    fn null_frequencies_stay_low() {
        let cfg = InterferenceConfig { beta1: 0.0, beta2: 0.0, ..small(5) };
        let s = simulate_interference(&cfg).unwrap();
        let m = regime_masks(&s, &cfg);
        // charts of 200+ rows put the threshold beyond 2.8 standard errors
        for mask in m.values().filter(|m| m.len() >= 2000) {
            let f = chart_frequencies(&s, mask, 10, 0.2).unwrap();
            assert!(f.f_e1y < 0.2 && f.f_e2y < 0.2, "{f:?}");
        }
    }

    #[test]
    fn response_scale_does_not_change_decisions() {
        let cfg = small(6);
        let s = simulate_interference(&cfg).unwrap();
        let mut scaled = s.clone();
        scaled.y.iter_mut().for_each(|y| *y *= 37.0);
        let mask = &regime_masks(&s, &cfg)["LM"];
        let a = chart_frequencies(&s, mask, 10, 0.2).unwrap();
        let b = chart_frequencies(&scaled, mask, 10, 0.2).unwrap();
        assert_eq!((a.f_e1y, a.f_e2y), (b.f_e1y, b.f_e2y));
    }

    #[test]
    fn too_few_rows_for_charts() {
        let s = simulate_interference(&small(7)).unwrap();
        assert!(chart_frequencies(&s, &[0, 1, 2], 2, 0.2).is_err());
    }

    #[test]
    fn decision_rule() {
        let f = |a, b| ChartFrequencies { f_e1y: a, f_e2y: b, charts: vec![], skipped: 0 };
        assert_eq!(stability_decision([&f(1.0, 1.0), &f(1.0, 1.0)], 0.8), (true, true));
        assert_eq!(stability_decision([&f(1.0, 0.5), &f(1.0, 1.0)], 0.8), (true, false));
        assert_eq!(stability_decision([&f(0.0, 0.0)], 0.0), (true, true));
    }

    #[test]
    fn west_east_flip() {
        let r = run_interference(&InterferenceConfig::default()).unwrap();
        for name in ["WL", "WS", "WL∩LM"] {
            let c = r.cover(name).unwrap();
            assert!(c.freqs.f_e1y >= 0.8 && c.freqs.f_e2y <= 0.2, "{name}: {:?}", c.freqs);
        }
        for name in ["E", "E∩LM"] {
            let c = r.cover(name).unwrap();
            assert!(c.freqs.f_e2y >= 0.8 && c.freqs.f_e1y <= 0.2, "{name}: {:?}", c.freqs);
        }
        assert_eq!(r.west_stable, (true, false));
        assert_eq!(r.east_stable, (false, true));
    }
}
