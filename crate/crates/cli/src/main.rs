use std::fs::{self, File};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use jstable::agg::{OrientationPolicy, ThresholdRule};
use jstable::ci::{CiConfig, Veto};
use jstable::interference::{run_interference, InterferenceConfig};
use jstable::runner::{
    load_csv, parse_guards, run_pipeline, sweep, write_sweep_csv, Learner, RunConfig, RunReport, Source, SweepGrid,
    MIN_REGIME_ROWS,
};
use jstable::sem::BenchmarkSpec;
use jstable::stats::AggregatorKind;

#[derive(Parser)]
#[command(name = "jstable", version, about = "Fit structure learners per regime and glue them by support thresholds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One pipeline run: per-regime fits, pooled baseline, aggregation.
    Run(RunArgs),
    /// Repeat the run over a grid of CI levels and depths.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated significance levels.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Comma-separated conditioning depths.
        #[arg(long, value_delimiter = ',')]
        depths: Vec<usize>,
    },
    /// Wind-sector interference demo.
    Interference(InterferenceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// CSV with a header row; one column names the regime.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Generated benchmark `d:density:regimes:rows_per_regime`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Interventional mean shift of the generated benchmark.
    #[arg(long, default_value_t = 0.0)]
    mean_shift: f64,
    #[arg(long, default_value = "env")]
    env_col: String,
    #[arg(long, default_value_t = MIN_REGIME_ROWS)]
    min_rows: usize,
    /// ges, cges, tces or ci.
    #[arg(long, default_value = "ci")]
    learner: Learner,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// p-value combiner for the CI learner: fisher, stouffer, tippett, mean.
    #[arg(long, default_value = "fisher")]
    agg: AggregatorKind,
    /// Regime whose independence verdict the others may overrule.
    #[arg(long, conflicts_with = "veto_any")]
    veto_ref: Option<String>,
    /// Any rejecting regime overrules an independence verdict.
    #[arg(long)]
    veto_any: bool,
    /// Aggregation rule, repeatable: intersection, union, kofe:K, allbutk:K, ratio:T.
    #[arg(long = "rule", default_value = "intersection")]
    rules: Vec<ThresholdRule>,
    /// Comma-separated π candidates for stability selection.
    #[arg(long, value_delimiter = ',')]
    pi_grid: Vec<f64>,
    /// Net-preference orientation margin.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// File of forbidden `from,to` directions.
    #[arg(long)]
    guards: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lambda_top: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_tri: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_sheaf: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_j: f64,
    /// Maximum parents per node for score-based learners.
    #[arg(long, default_value_t = 8)]
    dmax: usize,
    /// Bootstrap replicates per score-based fit.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterferenceArgs {
    /// Number of time steps.
    #[arg(long, default_value_t = 20_000)]
    t: usize,
    /// Charts per cover.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Stability threshold on chart frequencies.
    #[arg(long, default_value_t = 0.8)]
    pi: f64,
    /// Minimum standardized coefficient for an edge to count in a chart.
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_synthetic(s: &str, seed: u64, mean_shift: f64) -> Result<BenchmarkSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let [d, density, r, n] = parts[..] else {
        bail!("--synthetic expects d:density:regimes:rows_per_regime, got {s:?}");
    };
    let mut spec = BenchmarkSpec::new(d.parse()?, density.parse()?, r.parse()?, n.parse()?, seed);
    spec.mean_shift = mean_shift;
    Ok(spec)
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let source = match (&a.input, &a.synthetic) {
        (Some(path), _) => Source::Csv { path: path.clone(), env_col: a.env_col.clone(), min_rows: a.min_rows },
        (None, Some(s)) => Source::Synthetic(parse_synthetic(s, a.seed, a.mean_shift)?),
        (None, None) => bail!("either --input or --synthetic is required"),
    };
    let mut cfg = RunConfig::new(source, a.learner);
    let veto = match (&a.veto_ref, a.veto_any) {
        (Some(r), _) => Veto::Reference(r.clone()),
        (None, true) => Veto::AnyRegime,
        (None, false) => Veto::Off,
    };
    cfg.ci = CiConfig { alpha: a.alpha, depth: a.depth, kind: a.agg, veto };
    cfg.score.lambda_top = a.lambda_top;
    cfg.score.lambda_tri = a.lambda_tri;
    cfg.score.lambda_sheaf = a.lambda_sheaf;
    cfg.score.lambda_j = a.lambda_j;
    cfg.score.d_max = a.dmax;
    cfg.bootstrap = a.bootstrap;
    cfg.rules = a.rules.clone();
    cfg.pi_grid = a.pi_grid.clone();
    cfg.workers = a.workers;
    cfg.seed = a.seed;
    cfg.out = a.out.clone();
    let guards = match &a.guards {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let labels = match &cfg.source {
                Source::Csv { path, env_col, min_rows } => load_csv(path, env_col, *min_rows)?.labels().to_vec(),
                Source::Synthetic(spec) => jstable::graph::default_labels(spec.d),
                Source::Data(d) => d.labels().to_vec(),
            };
            parse_guards(&text, &labels)?
        }
        None => Default::default(),
    };
    cfg.policy = OrientationPolicy::new(a.delta, guards)?;
    Ok(cfg)
}

fn print_report(rep: &RunReport) {
    println!("regimes used: {} of {}", rep.e, rep.regimes.len());
    let line = |name: &str, edges: usize, m: Option<&jstable::runner::MetricPair>| match m {
        Some(m) => println!(
            "{name:<16} edges {edges:>3}  skeleton F1 {:.3}  SHD {:>3}  directed SHD {:>3}",
            m.skeleton.confusion.f1, m.skeleton.shd.shd, m.directed.shd.shd
        ),
        None => println!("{name:<16} edges {edges:>3}"),
    };
    line("pooled", rep.pooled.edges, rep.pooled.metrics.as_ref());
    for r in &rep.rules {
        line(&r.rule, r.graph.edges, r.graph.metrics.as_ref());
    }
    if let Some(pi) = &rep.pi {
        line(&format!("pi={}", pi.pi), pi.graph.edges, pi.graph.metrics.as_ref());
    }
    println!("map phase {:.3}s, total {:.3}s", rep.timing.map, rep.timing.total);
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Run(a) => {
            let rep = run_pipeline(&build_config(&a)?)?;
            print_report(&rep);
            if let Some(out) = &a.out {
                println!("artifacts in {}", out.display());
            }
        }
        Cmd::Sweep { run, alphas, depths } => {
            let cfg = build_config(&run)?;
            let rows = sweep(&cfg, &SweepGrid { alphas, depths });
            match &run.out {
                Some(out) => {
                    fs::create_dir_all(out)?;
                    let path = out.join("sweep.csv");
                    write_sweep_csv(File::create(&path)?, &rows)?;
                    println!("wrote {}", path.display());
                }
                None => write_sweep_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Cmd::Interference(a) => {
            let cfg = InterferenceConfig { t: a.t, k: a.k, pi: a.pi, tau_beta: a.tau, seed: a.seed, ..Default::default() };
            let rep = run_interference(&cfg)?;
            match &a.out {
                Some(out) => {
                    fs::create_dir_all(out)?;
                    rep.write_frequencies(File::create(out.join("frequencies.csv"))?)?;
                    rep.write_charts(File::create(out.join("charts.csv"))?)?;
                }
                None => rep.write_frequencies(std::io::stdout().lock())?,
            }
            println!("west stable (E1->Y, E2->Y): {:?}", rep.west_stable);
            println!("east stable (E1->Y, E2->Y): {:?}", rep.east_stable);
        }
    }
    Ok(())
}
