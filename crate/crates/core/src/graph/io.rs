use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// On-disk adjacency encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyFormat {
    /// One comma-separated row of the dense matrix per line.
    DenseCsv,
    /// Whitespace-separated `i j w` lines with 1-based node ids. A
    /// `# nodes N` comment fixes the node count; otherwise it is the largest
    /// id seen.
    Triplet,
}

impl FromStr for AdjacencyFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "dense-csv" => Ok(AdjacencyFormat::DenseCsv),
            "triplet" | "triplets" | "coo" => Ok(AdjacencyFormat::Triplet),
            other => Err(Error::Argument(format!("unknown adjacency format '{other}'"))),
        }
    }
}

/// Reads an adjacency file. Asymmetric input is symmetrized with
/// `max(w_ij, w_ji)`; negative weights and self-loops are rejected.
pub fn load_adjacency(path: impl AsRef<Path>, format: AdjacencyFormat) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_adjacency(&text, format, path)
}

pub fn save_adjacency(graph: &Graph, path: impl AsRef<Path>, format: AdjacencyFormat) -> Result<()> {
    let path = path.as_ref();
    let w = graph.adjacency();
    let n = graph.node_count();
    let mut out = String::new();
    match format {
        AdjacencyFormat::DenseCsv => {
            for i in 0..n {
                for j in 0..n {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{}", w[(i, j)]).unwrap();
                }
                out.push('\n');
            }
        }
        AdjacencyFormat::Triplet => {
            writeln!(out, "# nodes {n}").unwrap();
            for i in 0..n {
                for j in (i + 1)..n {
                    if w[(i, j)] != 0.0 {
                        writeln!(out, "{} {} {}", i + 1, j + 1, w[(i, j)]).unwrap();
                    }
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_adjacency(text: &str, format: AdjacencyFormat, path: &Path) -> Result<Graph> {
    let raw = match format {
        AdjacencyFormat::DenseCsv => parse_dense(text, path)?,
        AdjacencyFormat::Triplet => parse_triplets(text, path)?,
    };
    let n = raw.nrows();
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = raw[(i, j)].max(raw[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Graph::new(w)
}

fn parse_weight(token: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid weight '{}'", token.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite weight '{}'", token.trim())));
    }
    if v < 0.0 {
        return Err(Error::parse(path, line, format!("negative weight {v}")));
    }
    Ok(v)
}

fn parse_dense(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| parse_weight(tok, path, line_no))
            .collect::<Result<Vec<_>>>()?;
        rows.push((line_no, row));
    }
    let n = rows.len();
    let mut w = DMatrix::zeros(n, n);
    for (i, (line_no, row)) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::parse(
                path,
                *line_no,
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
        if row[i] != 0.0 {
            return Err(Error::parse(path, *line_no, format!("self-loop weight {} on node {}", row[i], i)));
        }
        for (j, &v) in row.iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    Ok(w)
}

fn parse_triplets(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut declared: Option<usize> = None;
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            if parts.next() == Some("nodes") {
                let n = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(path, line_no, "malformed '# nodes' directive"))?;
                declared = Some(n);
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 'i j w', found {} fields", fields.len()),
            ));
        }
        let id = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::parse(path, line_no, format!("invalid 1-based node id '{t}'"))),
            }
        };
        let (i, j) = (id(fields[0])?, id(fields[1])?);
        let w = parse_weight(fields[2], path, line_no)?;
        if i == j && w != 0.0 {
            return Err(Error::parse(path, line_no, format!("self-loop on node {}", i + 1)));
        }
        entries.push((line_no, i, j, w));
    }
    let max_id = entries.iter().map(|e| e.1.max(e.2) + 1).max().unwrap_or(0);
    let n = match declared {
        Some(n) if n < max_id => {
            return Err(Error::parse(
                path,
                entries.iter().find(|e| e.1.max(e.2) >= n).map_or(0, |e| e.0),
                format!("node id exceeds declared node count {n}"),
            ))
        }
        Some(n) => n,
        None => max_id,
    };
    let mut w = DMatrix::zeros(n, n);
    for (_, i, j, v) in entries {
        w[(i, j)] = f64::max(w[(i, j)], v);
    }
    Ok(w)
}
