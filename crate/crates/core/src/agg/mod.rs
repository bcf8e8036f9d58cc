//! Gluing per-regime graphs: support counts, threshold rules, streaming
//! aggregation with early stopping, π-stable skeletons, net-preference
//! orientation, validation-likelihood π selection, and cover-aggregated
//! backdoor adjustment.
//!
//! Everything here consumes adjacency matrices (or, for adjustment, binned
//! tables); raw sample rows only enter through [`select_pi`].

mod jdo;
mod pi;

use serde::{Deserialize, Serialize};

pub use jdo::{bin_quantiles, jdo_backdoor, mixture_conditional, CoverMean, DiscreteData};
pub use pi::{
    orient_net_preference, pi_skeleton, select_pi, stability_margin_report, MarginReport, OrientationPolicy, PiScore,
    PiSelection,
};

use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// Per-edge counts over `e` regimes and the matching frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportTable {
    pub e: usize,
    pub counts: Vec<Vec<usize>>,
    pub freq: Vec<Vec<f64>>,
}

impl SupportTable {
    pub fn d(&self) -> usize {
        self.counts.len()
    }
}

/// Sums the adjacencies elementwise; the diagonal is forced to zero.
pub fn support(adjs: &[Adjacency]) -> Result<SupportTable> {
    let first = adjs
        .first()
        .ok_or_else(|| Error::InsufficientData("no adjacency matrices to count".into()))?;
    let d = first.n();
    let mut counts = vec![vec![0usize; d]; d];
    for a in adjs {
        if a.n() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.n() });
        }
        for (u, v) in a.edges() {
            if u != v {
                counts[u][v] += 1;
            }
        }
    }
    let e = adjs.len();
    let freq = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / e as f64).collect())
        .collect();
    Ok(SupportTable { e, counts, freq })
}

/// Keep rule for an edge seen in some of `E` regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Intersection,
    Union,
    /// At least `τ` regimes.
    KOfE(usize),
    /// Missing from at most `k` regimes.
    AllButK(usize),
    /// Support frequency at least `τ`.
    Ratio(f64),
}

impl ThresholdRule {
    /// Smallest count meeting the rule among `e` regimes.
    pub fn required(&self, e: usize) -> Result<usize> {
        let bad = |msg: String| Err(Error::InvalidThreshold(msg));
        match *self {
            Self::Intersection => Ok(e.max(1)),
            Self::Union => Ok(1),
            Self::KOfE(t) if t >= 1 && t <= e => Ok(t),
            Self::KOfE(t) => bad(format!("k-of-E needs 1 <= {t} <= {e}")),
            Self::AllButK(k) if k < e => Ok(e - k),
            Self::AllButK(k) => bad(format!("all-but-k needs {k} < {e}")),
            // the smallest count whose frequency reaches the ratio, computed
            // with the same division as the batch rule so both agree exactly
            Self::Ratio(t) if t > 0.0 && t <= 1.0 => Ok((1..=e).find(|&c| c as f64 / e as f64 >= t).unwrap_or(e)),
            Self::Ratio(t) => bad(format!("ratio {t} outside (0, 1]")),
        }
    }

    /// File-name fragment, e.g. `kofe2` or `ratio0.5`.
    pub fn tag(&self) -> String {
        match self {
            Self::Intersection => "intersection".into(),
            Self::Union => "union".into(),
            Self::KOfE(t) => format!("kofe{t}"),
            Self::AllButK(k) => format!("allbutk{k}"),
            Self::Ratio(t) => format!("ratio{t}"),
        }
    }
}

impl std::fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Intersection => write!(f, "intersection"),
            Self::Union => write!(f, "union"),
            Self::KOfE(t) => write!(f, "kofe:{t}"),
            Self::AllButK(k) => write!(f, "allbutk:{k}"),
            Self::Ratio(t) => write!(f, "ratio:{t}"),
        }
    }
}

impl std::str::FromStr for ThresholdRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let int = |a: Option<&str>| -> Result<usize> {
            a.ok_or_else(|| Error::Parse(format!("rule {s:?} needs an argument")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad count in rule {s:?}")))
        };
        match name {
            "intersection" => Ok(Self::Intersection),
            "union" => Ok(Self::Union),
            "kofe" => Ok(Self::KOfE(int(arg)?)),
            "allbutk" => Ok(Self::AllButK(int(arg)?)),
            "ratio" => arg
                .ok_or_else(|| Error::Parse(format!("rule {s:?} needs an argument")))?
                .parse()
                .map(Self::Ratio)
                .map_err(|_| Error::Parse(format!("bad ratio in rule {s:?}"))),
            _ => Err(Error::Parse(format!("unknown rule {s:?}"))),
        }
    }
}

/// Batch thresholding of a support table.
pub fn aggregate(support: &SupportTable, rule: ThresholdRule) -> Result<Adjacency> {
    let d = support.d();
    let mut out = Adjacency::new(d);
    let tau = rule.required(support.e)?;
    let keep = |u: usize, v: usize| match rule {
        ThresholdRule::Ratio(t) => support.freq[u][v] >= t,
        _ => support.counts[u][v] >= tau,
    };
    for u in 0..d {
        for v in 0..d {
            if u != v && keep(u, v) {
                out.set(u, v, true);
            }
        }
    }
    Ok(out)
}

/// Single-reducer aggregation over regimes arriving one at a time.
///
/// Each edge is settled as soon as its running count reaches the threshold
/// or can no longer reach it; later matrices are not inspected for settled
/// edges. `visits` records how many matrices were read per edge.
#[derive(Debug, Clone)]
pub struct StreamingAggregator {
    d: usize,
    e: usize,
    tau: usize,
    seen: usize,
    counts: Vec<usize>,
    visits: Vec<usize>,
    state: Vec<Option<bool>>,
}

impl StreamingAggregator {
    pub fn new(d: usize, e: usize, rule: ThresholdRule) -> Result<Self> {
        if e == 0 {
            return Err(Error::InvalidThreshold("no regimes to aggregate".into()));
        }
        let tau = rule.required(e)?;
        let mut state = vec![None; d * d];
        for i in 0..d {
            state[i * d + i] = Some(false);
        }
        Ok(Self {
            d,
            e,
            tau,
            seen: 0,
            counts: vec![0; d * d],
            visits: vec![0; d * d],
            state,
        })
    }

    pub fn push(&mut self, a: &Adjacency) -> Result<()> {
        if a.n() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: a.n() });
        }
        if self.seen == self.e {
            return Err(Error::InvalidConfig(format!("more than the announced {} regimes", self.e)));
        }
        self.seen += 1;
        let remaining = self.e - self.seen;
        for k in 0..self.d * self.d {
            if self.state[k].is_some() {
                continue;
            }
            self.visits[k] += 1;
            if a.get(k / self.d, k % self.d) {
                self.counts[k] += 1;
            }
            if self.counts[k] >= self.tau {
                self.state[k] = Some(true);
            } else if self.counts[k] + remaining < self.tau {
                self.state[k] = Some(false);
            }
        }
        Ok(())
    }

    /// Number of edges not yet settled.
    pub fn open(&self) -> usize {
        self.state.iter().filter(|s| s.is_none()).count()
    }

    pub fn visits(&self) -> Vec<Vec<usize>> {
        self.visits.chunks(self.d).map(<[usize]>::to_vec).collect()
    }

    /// The aggregated graph; allowed once every regime is pushed or every
    /// edge is settled.
    pub fn finish(self) -> Result<Adjacency> {
        if self.seen != self.e && self.open() > 0 {
            return Err(Error::InsufficientData(format!("{} of {} regimes pushed", self.seen, self.e)));
        }
        let mut out = Adjacency::new(self.d);
        for (k, s) in self.state.iter().enumerate() {
            if *s == Some(true) {
                out.set(k / self.d, k % self.d, true);
            }
        }
        Ok(out)
    }
}

/// Streams `adjs` through a [`StreamingAggregator`]; returns the result and
/// the per-edge visit counts.
pub fn aggregate_streaming(adjs: &[Adjacency], rule: ThresholdRule) -> Result<(Adjacency, Vec<Vec<usize>>)> {
    let d = adjs
        .first()
        .ok_or_else(|| Error::InsufficientData("no adjacency matrices to aggregate".into()))?
        .n();
    let mut agg = StreamingAggregator::new(d, adjs.len(), rule)?;
    for a in adjs {
        agg.push(a)?;
        if agg.open() == 0 {
            break;
        }
    }
    let visits = agg.visits();
    Ok((agg.finish()?, visits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_stack(e: usize, d: usize, p: f64, seed: u64) -> Vec<Adjacency> {
        use rand::Rng;
        let mut r = crate::rng::stream(seed, 77);
        (0..e)
            .map(|_| {
                let mut a = Adjacency::new(d);
                for u in 0..d {
                    for v in 0..d {
                        if u != v && r.random_bool(p) {
                            a.set(u, v, true);
                        }
                    }
                }
                a
            })
            .collect()
    }

    fn naive(adjs: &[Adjacency], rule: ThresholdRule) -> Adjacency {
        let d = adjs[0].n();
        let e = adjs.len();
        let mut out = Adjacency::new(d);
        for u in 0..d {
            for v in 0..d {
                let c = adjs.iter().filter(|a| a.get(u, v)).count();
                let keep = u != v
                    && match rule {
                        ThresholdRule::Intersection => c == e,
                        ThresholdRule::Union => c >= 1,
                        ThresholdRule::KOfE(t) => c >= t,
                        ThresholdRule::AllButK(k) => c + k >= e,
                        ThresholdRule::Ratio(t) => c as f64 / e as f64 >= t,
                    };
                out.set(u, v, keep);
            }
        }
        out
    }

    #[test]
    fn identical_stack() {
        let a = random_stack(1, 6, 0.3, 1).remove(0);
        let s = support(&[a.clone(), a.clone(), a.clone()]).unwrap();
        for (u, v) in a.edges() {
            assert_eq!(s.counts[u][v], 3);
            assert_eq!(s.freq[u][v], 1.0);
        }
        assert_eq!(aggregate(&s, ThresholdRule::Intersection).unwrap(), a);
        let one = support(std::slice::from_ref(&a)).unwrap();
        assert_eq!(aggregate(&one, ThresholdRule::Ratio(1.0)).unwrap(), a);
    }

    #[test]
    fn diagonal_is_ignored() {
        let mut a = Adjacency::new(3);
        a.set(1, 1, true);
        a.set(0, 2, true);
        let s = support(&[a]).unwrap();
        assert_eq!(s.counts[1][1], 0);
        assert_eq!(s.counts[0][2], 1);
    }

    #[test]
    fn two_of_three() {
        let mut a = Adjacency::new(2);
        a.set(0, 1, true);
        let s = support(&[a.clone(), a, Adjacency::new(2)]).unwrap();
        assert!(aggregate(&s, ThresholdRule::AllButK(1)).unwrap().get(0, 1));
        assert!(!aggregate(&s, ThresholdRule::Intersection).unwrap().get(0, 1));
        assert!(aggregate(&s, ThresholdRule::Ratio(2.0 / 3.0)).unwrap().get(0, 1));
    }

    #[test]
    fn invalid_thresholds() {
        let s = support(&random_stack(3, 3, 0.5, 2)).unwrap();
        for rule in [ThresholdRule::KOfE(0), ThresholdRule::KOfE(4), ThresholdRule::AllButK(3), ThresholdRule::Ratio(0.0), ThresholdRule::Ratio(1.5)] {
            assert!(matches!(aggregate(&s, rule), Err(Error::InvalidThreshold(_))), "{rule}");
        }
        assert!(support(&[Adjacency::new(2), Adjacency::new(3)]).is_err());
    }

    #[test]
    fn rule_parsing_round_trips() {
        for rule in [
            ThresholdRule::Intersection,
            ThresholdRule::Union,
            ThresholdRule::KOfE(2),
            ThresholdRule::AllButK(1),
            ThresholdRule::Ratio(0.75),
        ] {
            assert_eq!(rule.to_string().parse::<ThresholdRule>().unwrap(), rule);
        }
        assert!("kofe".parse::<ThresholdRule>().is_err());
        assert!("majority".parse::<ThresholdRule>().is_err());
    }

    #[test]
    fn intersection_rejects_after_one_visit() {
        let mut stack = random_stack(5, 5, 0.8, 3);
        stack[0] = Adjacency::new(5);
        let (out, visits) = aggregate_streaming(&stack, ThresholdRule::Intersection).unwrap();
        assert_eq!(out.count(), 0);
        assert!(visits.iter().flatten().all(|&v| v <= 1));
    }

    fn rule_strategy(e: usize) -> impl Strategy<Value = ThresholdRule> {
        prop_oneof![
            Just(ThresholdRule::Intersection),
            Just(ThresholdRule::Union),
            (1..=e).prop_map(ThresholdRule::KOfE),
            (0..e).prop_map(ThresholdRule::AllButK),
            (1..=20u32).prop_map(|k| ThresholdRule::Ratio(k as f64 / 20.0)),
        ]
    }

    proptest! {
        #[test]
        fn streaming_matches_naive(
            (e, rule) in (1usize..=8).prop_flat_map(|e| (Just(e), rule_strategy(e))),
            d in 1usize..=8,
            p in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let stack = random_stack(e, d, p, seed);
            let (streamed, visits) = aggregate_streaming(&stack, rule).unwrap();
            let batch = aggregate(&support(&stack).unwrap(), rule).unwrap();
            let oracle = naive(&stack, rule);
            prop_assert_eq!(&streamed, &oracle);
            prop_assert_eq!(&batch, &oracle);
            prop_assert!(visits.iter().flatten().all(|&v| v <= e));
        }

        #[test]
        fn rules_nest(e in 1usize..=8, d in 2usize..=6, p in 0.0f64..1.0, seed in any::<u64>(), t in 1usize..=8) {
            let t = t.min(e);
            let s = support(&random_stack(e, d, p, seed)).unwrap();
            let inter = aggregate(&s, ThresholdRule::Intersection).unwrap();
            let mid = aggregate(&s, ThresholdRule::KOfE(t)).unwrap();
            let uni = aggregate(&s, ThresholdRule::Union).unwrap();
            prop_assert!(inter.is_subset_of(&mid) && mid.is_subset_of(&uni));
        }
    }
}
