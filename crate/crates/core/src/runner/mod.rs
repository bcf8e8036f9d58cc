//! Batch orchestration: ingest, fit every regime in parallel, fit the
//! pooled baseline, glue the per-regime graphs, pick π, score against the
//! truth when it is known, and write the artifacts.

mod io;
mod sweep;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{load_csv, parse_guards, read_regimes, write_curve_csv, write_matrix_csv};
pub use sweep::{sweep, write_sweep_csv, SweepGrid, SweepRow};

use crate::agg::{
    aggregate_streaming, orient_net_preference, pi_skeleton, select_pi, stability_margin_report, support,
    OrientationPolicy, PiScore, SupportTable, ThresholdRule,
};
use crate::ci::{ci_discover, CiConfig, CiEnvironments};
use crate::data::MultiRegimeData;
use crate::error::{Error, Result};
use crate::ges::{bootstrap_ges, tces_search, ScoreConfig};
use crate::graph::{cpdag, write_adjacency_csv, Adjacency, PartiallyDirectedGraph};
use crate::metrics::{evaluate, stability_index, MetricBlock, ScoreMode, StabilityIndex};
use crate::sem::BenchmarkSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Default minimum rows for a CSV regime to be kept.
pub const MIN_REGIME_ROWS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Ges,
    Cges,
    Tces,
    Ci,
}

impl std::str::FromStr for Learner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ges" => Ok(Self::Ges),
            "cges" => Ok(Self::Cges),
            "tces" => Ok(Self::Tces),
            "ci" | "pc" => Ok(Self::Ci),
            other => Err(Error::Parse(format!("unknown learner {other:?}"))),
        }
    }
}

/// Where the data come from.
#[derive(Debug, Clone)]
pub enum Source {
    Csv {
        path: PathBuf,
        env_col: String,
        min_rows: usize,
    },
    Synthetic(BenchmarkSpec),
    Data(MultiRegimeData<f64>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub learner: Learner,
    pub ci: CiConfig,
    pub score: ScoreConfig,
    /// Bootstrap replicates per score-based fit; 0 fits once.
    pub bootstrap: usize,
    pub rules: Vec<ThresholdRule>,
    /// Candidate π values; empty skips π selection.
    pub pi_grid: Vec<f64>,
    pub policy: OrientationPolicy,
    /// Count support on skeletons instead of directed adjacencies. Unset
    /// means: skeletons for the CI learner, directed otherwise.
    pub symmetric_support: Option<bool>,
    /// Share of each regime's rows used to fit candidate structures in π
    /// selection; the rest validates.
    pub train_frac: f64,
    pub workers: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(source: Source, learner: Learner) -> Self {
        Self {
            source,
            learner,
            ci: CiConfig::default(),
            score: ScoreConfig::default(),
            bootstrap: 0,
            rules: vec![ThresholdRule::Intersection],
            pi_grid: Vec::new(),
            policy: OrientationPolicy::default(),
            symmetric_support: None,
            train_frac: 0.75,
            workers: 1,
            seed: 0,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidConfig("train_frac must lie in (0, 1)".into()));
        }
        if let Some(p) = self.pi_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidThreshold(format!("π candidate {p} outside [0, 1]")));
        }
        self.score.validate()
    }

    fn symmetric(&self) -> bool {
        self.symmetric_support.unwrap_or(self.learner == Learner::Ci)
    }

    /// Score settings with the weights this learner does not use zeroed.
    fn effective_score(&self) -> ScoreConfig {
        let mut s = self.score.clone();
        s.seed = self.seed;
        match self.learner {
            Learner::Ges | Learner::Ci => {
                s.lambda_top = 0.0;
                s.lambda_tri = 0.0;
                s.lambda_sheaf = 0.0;
                s.lambda_j = 0.0;
            }
            Learner::Cges => {
                s.lambda_sheaf = 0.0;
                s.lambda_j = 0.0;
            }
            Learner::Tces => {}
        }
        s
    }
}

/// Structure learned from one dataset.
#[derive(Debug, Clone)]
pub struct Fit {
    pub pdag: PartiallyDirectedGraph,
    pub sepsets: Option<serde_json::Value>,
}

/// Runs the configured learner on `data` as a whole.
pub fn fit_learner(data: &MultiRegimeData<f64>, cfg: &RunConfig) -> Result<Fit> {
    match cfg.learner {
        Learner::Ci => {
            let envs = CiEnvironments::fisher_z(&data.as_pooled()?)?;
            let res = ci_discover(&envs, &cfg.ci)?;
            Ok(Fit {
                pdag: res.pdag,
                sepsets: Some(res.sepsets.to_json()),
            })
        }
        _ => {
            let score = cfg.effective_score();
            let pdag = if cfg.bootstrap > 0 {
                let freq = bootstrap_ges(data, cfg.bootstrap, &score, cfg.seed)?;
                PartiallyDirectedGraph::from_directed(&freq.consensus(0.5))
            } else {
                cpdag(&tces_search(data, &score)?.dag)
            };
            Ok(Fit { pdag, sepsets: None })
        }
    }
}

/// Result of gluing per-regime adjacencies under each rule.
#[derive(Debug, Clone)]
pub struct Glued {
    pub support: SupportTable,
    /// Rule, aggregated graph, and the largest number of regimes any edge
    /// had to be read from before it was settled.
    pub graphs: Vec<(ThresholdRule, Adjacency, usize)>,
}

/// The reduce phase. It sees adjacency matrices only, never sample rows.
pub fn glue(adjs: &[Adjacency], rules: &[ThresholdRule]) -> Result<Glued> {
    let support = support(adjs)?;
    let graphs = rules
        .iter()
        .map(|&rule| {
            let (g, visits) = aggregate_streaming(adjs, rule)?;
            let max_visits = visits.iter().flatten().copied().max().unwrap_or(0);
            Ok((rule, g, max_visits))
        })
        .collect::<Result<_>>()?;
    Ok(Glued { support, graphs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricPair {
    pub skeleton: MetricBlock,
    pub directed: MetricBlock,
}

fn score_against(pred: &PartiallyDirectedGraph, truth: Option<&PartiallyDirectedGraph>) -> Result<Option<MetricPair>> {
    truth
        .map(|t| {
            Ok(MetricPair {
                skeleton: evaluate(pred, t, ScoreMode::Skeleton)?,
                directed: evaluate(pred, t, ScoreMode::Directed)?,
            })
        })
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub id: String,
    pub n: usize,
    pub intervention_target: Option<usize>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSummary {
    pub rule: String,
    pub max_visits: usize,
    #[serde(flatten)]
    pub graph: GraphSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiSummary {
    pub pi: f64,
    pub delta: f64,
    pub scores: Vec<PiScore>,
    #[serde(flatten)]
    pub graph: GraphSummary,
}

/// Wall-clock seconds per phase; excluded from determinism comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub workers: usize,
    pub load: f64,
    pub map: f64,
    pub pooled: f64,
    pub reduce: f64,
    pub pi: f64,
    pub write: f64,
    pub total: f64,
}

/// Graphs kept in memory alongside the report.
#[derive(Debug, Clone)]
pub struct RunGraphs {
    pub per_regime: Vec<(String, PartiallyDirectedGraph)>,
    pub pooled: PartiallyDirectedGraph,
    pub rules: Vec<(ThresholdRule, Adjacency)>,
    pub pi: Option<PartiallyDirectedGraph>,
    pub support: SupportTable,
    pub truth: Option<PartiallyDirectedGraph>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub learner: Learner,
    pub seed: u64,
    pub d: usize,
    pub labels: Vec<String>,
    pub regimes: Vec<RegimeSummary>,
    /// Regimes that entered aggregation.
    pub e: usize,
    pub pooled: GraphSummary,
    pub rules: Vec<RuleSummary>,
    pub pi: Option<PiSummary>,
    pub stability: Option<StabilityIndex>,
    pub artifacts: Vec<String>,
    pub timing: Timing,
    #[serde(skip)]
    pub graphs: RunGraphs,
}

impl RunReport {
    /// `report.json` contents.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `report.json` with the timing block removed; equal configs and seeds
    /// give equal strings.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn rule(&self, rule: ThresholdRule) -> Option<&RuleSummary> {
        let name = rule.to_string();
        self.rules.iter().find(|r| r.rule == name)
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Symmetric pairs become undirected edges, one-way entries directed.
fn as_pdag(a: &Adjacency) -> PartiallyDirectedGraph {
    PartiallyDirectedGraph::from_directed(a)
}

struct Writer<'a> {
    dir: Option<&'a Path>,
    labels: &'a [String],
    written: Vec<String>,
}

impl Writer<'_> {
    fn create(&mut self, name: &str) -> Result<Option<BufWriter<File>>> {
        let Some(dir) = self.dir else { return Ok(None) };
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(Some(BufWriter::new(f)))
    }

    fn adjacency(&mut self, name: &str, a: &Adjacency) -> Result<Option<String>> {
        match self.create(name)? {
            Some(w) => {
                write_adjacency_csv(w, a, self.labels)?;
                Ok(Some(name.to_string()))
            }
            None => Ok(None),
        }
    }
}

/// Runs the whole pipeline.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timing = Timing {
        workers: cfg.workers,
        ..Timing::default()
    };
    let data = match &cfg.source {
        Source::Csv { path, env_col, min_rows } => load_csv(path, env_col, *min_rows)?,
        Source::Synthetic(spec) => spec.generate()?,
        Source::Data(d) => d.clone(),
    };
    let labels = data.labels().to_vec();
    let truth = data.truth().map(|t| PartiallyDirectedGraph::from_directed(t.adjacency()));
    timing.load = start.elapsed().as_secs_f64();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    // map: one task per regime; a panic stays inside its task
    let t = Instant::now();
    let fits: Vec<(String, Result<Fit>)> = pool.install(|| {
        data.regimes()
            .par_iter()
            .map(|r| {
                let id = r.regime_id.clone();
                let one = data.filter_regimes(|x| x.regime_id == id);
                let res = catch_unwind(AssertUnwindSafe(|| fit_learner(&one, cfg)))
                    .unwrap_or_else(|_| Err(Error::DegenerateRegime(format!("{id}: learner panicked"))));
                (id, res)
            })
            .collect()
    });
    timing.map = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let pooled = pool.install(|| fit_learner(&data, cfg))?;
    timing.pooled = t.elapsed().as_secs_f64();

    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = Writer {
        dir: cfg.out.as_deref(),
        labels: &labels,
        written: Vec::new(),
    };

    let t = Instant::now();
    let symmetric = cfg.symmetric();
    let mut regimes = Vec::with_capacity(fits.len());
    let mut adjs = Vec::new();
    let mut per_regime = Vec::new();
    let mut failures = Vec::new();
    for (r, (id, res)) in data.regimes().iter().zip(&fits) {
        let mut s = RegimeSummary {
            id: id.clone(),
            n: r.n(),
            intervention_target: r.spec.intervention_target,
            ok: false,
            error: None,
            edges: None,
            file: None,
            metrics: None,
        };
        match res {
            Ok(fit) => {
                let a = if symmetric { fit.pdag.skeleton() } else { fit.pdag.to_adjacency() };
                s.ok = true;
                s.edges = Some(fit.pdag.skeleton().count() / 2);
                s.file = w.adjacency(&format!("A_env_{}.csv", file_safe(id)), &a)?;
                s.metrics = score_against(&fit.pdag, truth.as_ref())?;
                if let (Some(sep), Some(f)) = (&fit.sepsets, w.create(&format!("sepsets_{}.json", file_safe(id)))?) {
                    serde_json::to_writer_pretty(f, sep)?;
                }
                adjs.push(a);
                per_regime.push((id.clone(), fit.pdag.clone()));
            }
            Err(e) => {
                log::warn!("regime {id} failed: {e}");
                s.error = Some(e.to_string());
                failures.push(format!("{id}: {e}"));
            }
        }
        regimes.push(s);
    }
    if adjs.is_empty() {
        return Err(Error::AllRegimesFailed(failures.join("; ")));
    }
    let glued = glue(&adjs, &cfg.rules)?;
    timing.reduce = t.elapsed().as_secs_f64();

    let pooled_adj = if symmetric { pooled.pdag.skeleton() } else { pooled.pdag.to_adjacency() };
    let pooled_summary = GraphSummary {
        edges: pooled.pdag.skeleton().count() / 2,
        file: w.adjacency("A_pooled.csv", &pooled_adj)?,
        metrics: score_against(&pooled.pdag, truth.as_ref())?,
    };
    let mut rules = Vec::new();
    for (rule, g, max_visits) in &glued.graphs {
        let pdag = as_pdag(g);
        rules.push(RuleSummary {
            rule: rule.to_string(),
            max_visits: *max_visits,
            graph: GraphSummary {
                edges: pdag.skeleton().count() / 2,
                file: w.adjacency(&format!("A_Jstable_{}.csv", rule.tag()), g)?,
                metrics: score_against(&pdag, truth.as_ref())?,
            },
        });
    }

    let t = Instant::now();
    let freq = &glued.support.freq;
    let (pi, pi_graph) = if cfg.pi_grid.is_empty() {
        (None, None)
    } else {
        let (train, val) = data.split_rows(cfg.train_frac)?;
        let sel = pool.install(|| select_pi(freq, &cfg.pi_grid, &train, &val, &cfg.policy))?;
        let g = orient_net_preference(freq, &cfg.policy, &pi_skeleton(freq, sel.pi)?);
        let summary = PiSummary {
            pi: sel.pi,
            delta: cfg.policy.delta_margin,
            scores: sel.scores,
            graph: GraphSummary {
                edges: g.skeleton().count() / 2,
                file: w.adjacency("A_Jstable_pi.csv", &g.to_adjacency())?,
                metrics: score_against(&g, truth.as_ref())?,
            },
        };
        (Some(summary), Some(g))
    };
    timing.pi = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let d = labels.len();
    let edge_scores: Vec<Vec<f64>> = (0..d)
        .flat_map(|u| (0..d).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && glued.support.counts[u][v] > 0)
        .map(|(u, v)| adjs.iter().map(|a| if a.get(u, v) { 1.0 } else { 0.0 }).collect())
        .collect();
    let stability = if edge_scores.is_empty() { None } else { Some(stability_index(&edge_scores)?) };
    if let Some(f) = w.create("support_counts.csv")? {
        write_matrix_csv(f, &glued.support.counts, &labels)?;
    }
    if let Some(f) = w.create("stability.csv")? {
        write_matrix_csv(f, &glued.support.freq, &labels)?;
    }
    let margins = stability_margin_report(&glued.support);
    if let Some(f) = w.create("margins.csv")? {
        write_matrix_csv(f, &margins.margins, &labels)?;
    }
    if let Some(f) = w.create("support_curve.csv")? {
        write_curve_csv(f, &margins.curve)?;
    }
    let mut artifacts = w.written.clone();
    if cfg.out.is_some() {
        artifacts.push("report.json".into());
    }
    artifacts.sort();

    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        learner: cfg.learner,
        seed: cfg.seed,
        d,
        labels: labels.clone(),
        regimes,
        e: adjs.len(),
        pooled: pooled_summary,
        rules,
        pi,
        stability,
        artifacts,
        timing,
        graphs: RunGraphs {
            per_regime,
            pooled: pooled.pdag,
            rules: glued.graphs.iter().map(|(r, g, _)| (*r, g.clone())).collect(),
            pi: pi_graph,
            support: glued.support,
            truth,
        },
    };
    report.timing.write = t.elapsed().as_secs_f64();
    report.timing.total = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.out {
        let path = dir.join("report.json");
        fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

/// Per-rule metric lookups used by sweeps and tests.
pub fn rule_metrics(report: &RunReport) -> BTreeMap<String, Option<MetricPair>> {
    report.rules.iter().map(|r| (r.rule.clone(), r.graph.metrics)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(learner: Learner) -> RunConfig {
        let mut cfg = RunConfig::new(Source::Synthetic(BenchmarkSpec::new(5, 1.0, 3, 300, 1)), learner);
        cfg.rules = vec![ThresholdRule::Intersection, ThresholdRule::KOfE(2), ThresholdRule::Union];
        cfg
    }

    #[test]
    fn ci_pipeline_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic(Learner::Ci);
        cfg.pi_grid = vec![0.3, 0.6, 1.0];
        cfg.out = Some(dir.path().to_path_buf());
        let rep = run_pipeline(&cfg).unwrap();
        assert_eq!(rep.e, 3);
        for a in &rep.artifacts {
            assert!(dir.path().join(a).exists(), "{a}");
        }
        for name in [
            "A_env_e0.csv",
            "A_pooled.csv",
            "A_Jstable_intersection.csv",
            "A_Jstable_kofe2.csv",
            "A_Jstable_union.csv",
            "A_Jstable_pi.csv",
            "support_counts.csv",
            "stability.csv",
            "margins.csv",
            "support_curve.csv",
            "report.json",
            "sepsets_e0.json",
        ] {
            assert!(rep.artifacts.iter().any(|a| a == name), "{name}");
        }
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert!(json["rules"][0]["metrics"]["skeleton"]["f1"].is_number());
        assert!(json["timing"]["map"].is_number());
    }

    #[test]
    fn rule_graphs_nest() {
        for learner in [Learner::Ci, Learner::Ges] {
            let rep = run_pipeline(&synthetic(learner)).unwrap();
            let g = &rep.graphs.rules;
            assert!(g[0].1.is_subset_of(&g[1].1) && g[1].1.is_subset_of(&g[2].1));
        }
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let mut a = synthetic(Learner::Ges);
        a.pi_grid = vec![0.5, 1.0];
        let mut b = a.clone();
        b.workers = 3;
        let (ra, rb) = (run_pipeline(&a).unwrap(), run_pipeline(&b).unwrap());
        assert_eq!(ra.deterministic_json().unwrap(), rb.deterministic_json().unwrap());
        assert_ne!(ra.to_json().unwrap(), ra.deterministic_json().unwrap());
    }

    #[test]
    fn failed_regime_is_excluded() {
        let base: MultiRegimeData<f64> = BenchmarkSpec::new(4, 1.0, 3, 200, 2).generate().unwrap();
        // a regime too short for any test drops out, the rest carry on
        let short = base.regimes()[2].data.select_rows(&[0, 1, 2]);
        let mut regimes = base.regimes().to_vec();
        regimes[2] = crate::data::RegimeDataset::new(regimes[2].spec.clone(), short).unwrap();
        let data = MultiRegimeData::new(regimes, base.labels().to_vec(), base.truth().cloned()).unwrap();
        let rep = run_pipeline(&RunConfig::new(Source::Data(data), Learner::Ges)).unwrap();
        assert_eq!(rep.e, 2);
        assert!(!rep.regimes[2].ok && rep.regimes[2].error.is_some());
    }

    #[test]
    fn zero_workers_rejected() {
        let mut cfg = synthetic(Learner::Ci);
        cfg.workers = 0;
        assert!(matches!(run_pipeline(&cfg), Err(Error::InvalidConfig(_))));
    }
}
