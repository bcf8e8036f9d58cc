use std::io::{Read, Write};

use super::Adjacency;
use crate::error::{Error, Result};

/// Writes `labels` as a header row followed by one 0/1 row per source node.
pub fn write_adjacency_csv<W: Write>(out: W, adj: &Adjacency, labels: &[String]) -> Result<()> {
    if labels.len() != adj.n() {
        return Err(Error::DimensionMismatch {
            expected: adj.n(),
            found: labels.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(labels)?;
    for i in 0..adj.n() {
        w.write_record((0..adj.n()).map(|j| if adj.get(i, j) { "1" } else { "0" }))?;
    }
    w.flush().map_err(|e| Error::io("<adjacency csv>", e))?;
    Ok(())
}

/// Reads the format produced by [`write_adjacency_csv`].
pub fn read_adjacency_csv<R: Read>(input: R) -> Result<(Adjacency, Vec<String>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let labels: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let d = labels.len();
    let mut adj = Adjacency::new(d);
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: i + 1,
            });
        }
        if rec.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rec.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            match cell.trim() {
                "0" => {}
                "1" => adj.set(i, j, true),
                other => {
                    return Err(Error::Parse(format!(
                        "adjacency cell ({i},{j}) = {other:?}"
                    )))
                }
            }
        }
        rows += 1;
    }
    if rows != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rows,
        });
    }
    Ok((adj, labels))
}
