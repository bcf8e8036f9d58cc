//! Dataset ingestion and matrix artifacts.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Display;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{MultiRegimeData, RegimeDataset, RegimeSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Reads a CSV with a header row into regimes keyed by `env_col`.
///
/// A column counts as numeric when at least one of its cells parses as a
/// number; other columns are dropped with a warning. A blank or
/// unparseable cell inside a numeric column is an error. Without the env
/// column everything becomes one regime named `pooled`. Regimes keep their
/// order of first appearance; those with fewer than `min_rows` rows are
/// dropped with a warning.
pub fn read_regimes<R: Read>(input: R, env_col: &str, min_rows: usize) -> Result<MultiRegimeData<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let env_idx = header.iter().position(|h| h == env_col);
    if env_idx.is_none() {
        log::warn!("no {env_col:?} column; treating all rows as one regime");
    }
    let records: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::InsufficientData("no data rows".into()));
    }
    let features: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != env_idx)
        .filter(|&c| {
            let numeric = records.iter().any(|rec| rec.get(c).is_some_and(|s| s.parse::<f64>().is_ok()));
            if !numeric {
                log::warn!("dropping non-numeric column {:?}", header[c]);
            }
            numeric
        })
        .collect();
    if features.is_empty() {
        return Err(Error::InsufficientData("no numeric columns".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for (line, rec) in records.iter().enumerate() {
        let env = match env_idx {
            Some(e) => rec.get(e).unwrap_or("").to_string(),
            None => "pooled".to_string(),
        };
        let row = features
            .iter()
            .map(|&c| {
                let cell = rec.get(c).unwrap_or("");
                cell.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Parse(format!("row {}: column {:?} holds {cell:?}", line + 2, header[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !rows.contains_key(&env) {
            order.push(env.clone());
        }
        rows.entry(env).or_default().push(row);
    }
    let mut regimes = Vec::new();
    for id in order {
        let data = &rows[&id];
        if data.len() < min_rows {
            log::warn!("regime {id} has {} rows (< {min_rows}) and is left out", data.len());
            continue;
        }
        regimes.push(RegimeDataset::new(RegimeSpec::observational(id), Matrix::from_rows(data)?)?);
    }
    if regimes.is_empty() {
        return Err(Error::InsufficientData(format!("no regime has {min_rows} or more rows")));
    }
    let labels = features.iter().map(|&c| header[c].clone()).collect();
    MultiRegimeData::new(regimes, labels, None)
}

/// [`read_regimes`] from a file.
pub fn load_csv(path: &Path, env_col: &str, min_rows: usize) -> Result<MultiRegimeData<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_regimes(f, env_col, min_rows)
}

/// Forbidden directed edges, one `from,to` pair per line, named by label
/// or by column index. Blank lines and lines starting with `#` are skipped.
pub fn parse_guards(text: &str, labels: &[String]) -> Result<BTreeSet<(usize, usize)>> {
    let resolve = |tok: &str| -> Result<usize> {
        let tok = tok.trim();
        if let Some(i) = labels.iter().position(|l| l == tok) {
            return Ok(i);
        }
        match tok.parse::<usize>() {
            Ok(i) if i < labels.len() => Ok(i),
            _ => Err(Error::Parse(format!("unknown variable {tok:?} in guards"))),
        }
    };
    let mut out = BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("guard line {line:?} is not `from,to`")))?;
        if a.trim() == "from" && b.trim() == "to" {
            continue;
        }
        let (u, v) = (resolve(a)?, resolve(b)?);
        if u == v {
            return Err(Error::Parse(format!("guard {line:?} is a self-loop")));
        }
        out.insert((u, v));
    }
    Ok(out)
}

/// Labelled square matrix: header of labels, one row per source.
pub fn write_matrix_csv<W: Write, D: Display>(out: W, m: &[Vec<D>], labels: &[String]) -> Result<()> {
    if m.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), found: m.len() });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(labels)?;
    for row in m {
        w.write_record(row.iter().map(ToString::to_string))?;
    }
    w.flush().map_err(|e| Error::io("<matrix csv>", e))?;
    Ok(())
}

/// Two-column CSV `t,count`.
pub fn write_curve_csv<W: Write>(out: W, curve: &[(usize, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "count"])?;
    for (t, c) in curve {
        w.write_record([t.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<curve csv>", e))?;
    Ok(())
}
