//! Parameter grids over the pipeline.

use std::io::Write;

use serde::Serialize;

use super::{run_pipeline, RunConfig};
use crate::error::{Error, Result};

/// Cross product of CI settings; an empty axis keeps the base value.
#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub depths: Vec<usize>,
}

/// One (cell, rule) line of the consolidated table. Metrics are scored on
/// skeletons, plus the directed SHD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: usize,
    pub alpha: f64,
    pub depth: usize,
    pub rule: String,
    pub edges: Option<usize>,
    pub tp: Option<usize>,
    pub fp: Option<usize>,
    #[serde(rename = "fn")]
    pub fn_: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub shd: Option<usize>,
    pub directed_shd: Option<usize>,
    pub map_seconds: f64,
    pub total_seconds: f64,
    pub best_f1: bool,
    pub best_shd: bool,
    pub error: Option<String>,
}

/// Runs `base` once per grid cell; cell `k` writes into `<out>/cell_<k>`.
/// A failing cell yields a row carrying its error and does not stop the
/// others.
pub fn sweep(base: &RunConfig, grid: &SweepGrid) -> Vec<SweepRow> {
    let alphas = if grid.alphas.is_empty() { vec![base.ci.alpha] } else { grid.alphas.clone() };
    let depths = if grid.depths.is_empty() { vec![base.ci.depth] } else { grid.depths.clone() };
    let mut rows = Vec::new();
    let mut cell = 0;
    for &alpha in &alphas {
        for &depth in &depths {
            let mut cfg = base.clone();
            cfg.ci.alpha = alpha;
            cfg.ci.depth = depth;
            cfg.out = base.out.as_ref().map(|o| o.join(format!("cell_{cell}")));
            let blank = |rule: String, err: Option<String>| SweepRow {
                cell,
                alpha,
                depth,
                rule,
                edges: None,
                tp: None,
                fp: None,
                fn_: None,
                precision: None,
                recall: None,
                f1: None,
                shd: None,
                directed_shd: None,
                map_seconds: 0.0,
                total_seconds: 0.0,
                best_f1: false,
                best_shd: false,
                error: err,
            };
            match run_pipeline(&cfg) {
                Ok(rep) => {
                    for r in &rep.rules {
                        let mut row = blank(r.rule.clone(), None);
                        row.edges = Some(r.graph.edges);
                        row.map_seconds = rep.timing.map;
                        row.total_seconds = rep.timing.total;
                        if let Some(m) = r.graph.metrics {
                            let s = m.skeleton;
                            row.tp = Some(s.confusion.tp);
                            row.fp = Some(s.confusion.fp);
                            row.fn_ = Some(s.confusion.fn_);
                            row.precision = Some(s.confusion.precision);
                            row.recall = Some(s.confusion.recall);
                            row.f1 = Some(s.confusion.f1);
                            row.shd = Some(s.shd.shd);
                            row.directed_shd = Some(m.directed.shd.shd);
                        }
                        rows.push(row);
                    }
                }
                Err(e) => {
                    log::warn!("sweep cell {cell} failed: {e}");
                    for rule in &base.rules {
                        rows.push(blank(rule.to_string(), Some(e.to_string())));
                    }
                }
            }
            cell += 1;
        }
    }
    let best_f1 = rows.iter().filter_map(|r| r.f1).fold(f64::NEG_INFINITY, f64::max);
    let best_shd = rows.iter().filter_map(|r| r.shd).min();
    for r in &mut rows {
        r.best_f1 = r.f1 == Some(best_f1);
        r.best_shd = r.shd.is_some() && r.shd == best_shd;
    }
    rows
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("sweep.csv", e))?;
    Ok(())
}
