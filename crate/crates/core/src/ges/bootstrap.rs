//! Bootstrap edge frequencies over resampled searches.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::search::tces_search;
use super::ScoreConfig;
use crate::data::{MultiRegimeData, RegimeDataset};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::rng;
use crate::scalar::Real;

/// Edge frequencies over `b` replicates. `undirected[u][v]` counts the pair
/// in either orientation and is symmetric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeFrequencies {
    pub b: usize,
    pub directed: Vec<Vec<f64>>,
    pub undirected: Vec<Vec<f64>>,
}

impl EdgeFrequencies {
    pub fn d(&self) -> usize {
        self.directed.len()
    }

    /// Consensus graph: `u -> v` when its directed frequency reaches
    /// `threshold`; a pair whose undirected frequency reaches it while
    /// neither orientation does is kept in both directions.
    pub fn consensus(&self, threshold: f64) -> Adjacency {
        let d = self.d();
        let mut a = Adjacency::new(d);
        for u in 0..d {
            for v in 0..d {
                if u == v {
                    continue;
                }
                let dir = self.directed[u][v] >= threshold;
                let loose = self.undirected[u][v] >= threshold
                    && self.directed[u][v] < threshold
                    && self.directed[v][u] < threshold;
                if dir || loose {
                    a.set(u, v, true);
                }
            }
        }
        a
    }
}

fn resample<T: Real>(data: &MultiRegimeData<T>, r: &mut rng::Rng) -> Result<MultiRegimeData<T>> {
    // rows are drawn with replacement inside each regime so regime sizes stay fixed
    let regimes = data
        .regimes()
        .iter()
        .map(|reg| {
            let n = reg.n();
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            RegimeDataset::new(reg.spec.clone(), reg.data.select_rows(&rows))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiRegimeData::new(regimes, data.labels().to_vec(), data.truth().cloned())
}

/// Runs the configured search on `b` bootstrap resamples. Replicate `k`
/// draws from its own substream of `seed`, so the result does not depend on
/// scheduling.
pub fn bootstrap_ges<T: Real>(data: &MultiRegimeData<T>, b: usize, cfg: &ScoreConfig, seed: u64) -> Result<EdgeFrequencies> {
    if b == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    let d = data.d();
    let graphs = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, rng::stream_id(&[seed, k as u64, 0xb007]));
            let sample = resample(data, &mut r)?;
            Ok(tces_search(&sample, cfg)?.dag.adjacency().clone())
        })
        .collect::<Result<Vec<Adjacency>>>()?;
    let mut directed = vec![vec![0.0; d]; d];
    let mut undirected = vec![vec![0.0; d]; d];
    for g in &graphs {
        for (u, v) in g.edges() {
            directed[u][v] += 1.0;
            undirected[u][v] += 1.0;
            undirected[v][u] += 1.0;
        }
    }
    let bf = b as f64;
    for row in directed.iter_mut().chain(undirected.iter_mut()) {
        row.iter_mut().for_each(|x| *x /= bf);
    }
    Ok(EdgeFrequencies { b, directed, undirected })
}
