//! Equal-frequency discretization of numeric columns.
//!
//! Bin edges are fit on training rows only and reused on test rows. Intervals
//! are left-closed/right-open: value `v` lands in bin `#{edges e : v >= e}`,
//! so values outside the fitted range clamp to the first or last bin.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of fitting bins to one column.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// Bin index per input value.
    pub indices: Vec<usize>,
    /// Interior edges (len = bins - 1 when the column supports that many).
    pub edges: Vec<f64>,
    /// Set when the column degraded to fewer bins than requested.
    pub warning: Option<String>,
}

/// Computes equal-frequency bin edges on `column` and maps each value to its
/// bin. Columns with fewer distinct values than requested bins degrade to
/// one bin per distinct value.
pub fn discretize_numeric(column: &[f64], bins: usize) -> Result<Discretized> {
    if bins < 2 {
        return Err(Error::InvalidArgument("bins must be >= 2".into()));
    }
    if column.is_empty() {
        return Err(Error::InvalidArgument("column is empty".into()));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "column contains non-finite values".into(),
        ));
    }

    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = sorted.clone();
    distinct.dedup();

    let (edges, warning) = if distinct.len() < bins {
        let edges: Vec<f64> = distinct[1..].to_vec();
        let warning = Some(format!(
            "column has {} distinct value(s), fewer than {} bins; using one bin per distinct value",
            distinct.len(),
            bins
        ));
        (edges, warning)
    } else {
        let n = sorted.len();
        let mut edges: Vec<f64> = (1..bins).map(|j| sorted[n * j / bins]).collect();
        edges.dedup();
        edges.retain(|&e| e > sorted[0]);
        let warning = if edges.len() < bins - 1 {
            Some(format!(
                "quantile edges collapsed; column yields {} bin(s) instead of {}",
                edges.len() + 1,
                bins
            ))
        } else {
            None
        };
        (edges, warning)
    };

    let indices = column.iter().map(|&v| bin_of(v, &edges)).collect();
    Ok(Discretized {
        indices,
        edges,
        warning,
    })
}

/// Maps a value onto previously fitted edges.
pub fn bin_of(value: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|&&e| value >= e).count()
}

/// Name assigned to bin `i`; schemas for binned columns use these values.
pub fn bin_name(i: usize) -> String {
    format!("bin{i}")
}

/// Parsed binning spec: which CSV columns to discretize and into how many bins.
///
/// File format, one column per line: `column_name: numeric, bins=3`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinningSpec {
    pub columns: BTreeMap<String, usize>,
}

impl BinningSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::SchemaParse {
                line: lineno + 1,
                message,
            };
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| err("expected `column: numeric, bins=K`".into()))?;
            let mut bins = None;
            let mut tagged_numeric = false;
            for part in rest.split(',') {
                let part = part.trim();
                if part == "numeric" {
                    tagged_numeric = true;
                } else if let Some(k) = part.strip_prefix("bins=") {
                    bins = Some(k.trim().parse::<usize>().map_err(|_| {
                        err(format!("cannot parse bin count `{k}`"))
                    })?);
                } else if !part.is_empty() {
                    return Err(err(format!("unrecognized attribute `{part}`")));
                }
            }
            if !tagged_numeric {
                return Err(err("missing `numeric` tag".into()));
            }
            let bins = bins.ok_or_else(|| err("missing `bins=K`".into()))?;
            if bins < 2 {
                return Err(err("bins must be >= 2".into()));
            }
            columns.insert(name.trim().to_string(), bins);
        }
        Ok(BinningSpec { columns })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Fitted edges per column, serializable for reuse on test data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl BinEdges {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedWeights(e.to_string()))
    }
}

/// Fits edges for every column in `spec` on the given CSV text and rewrites
/// those cells to bin names. Returns the transformed CSV, the fitted edges
/// and any degradation warnings.
pub fn fit_and_bin_csv(text: &str, spec: &BinningSpec) -> Result<(String, BinEdges, Vec<String>)> {
    let table = CsvTable::parse(text)?;
    let mut edges = BinEdges::default();
    let mut warnings = Vec::new();
    for (column, &bins) in &spec.columns {
        let idx = table.column_index(column)?;
        let values = table.numeric_column(idx, column)?;
        let d = discretize_numeric(&values, bins)?;
        if let Some(w) = d.warning {
            warnings.push(format!("{column}: {w}"));
        }
        edges.columns.insert(column.clone(), d.edges);
    }
    let out = apply_bin_edges(text, &edges)?;
    Ok((out, edges, warnings))
}

/// Rewrites the spec'd columns of a CSV using already-fitted edges.
pub fn apply_bin_edges(text: &str, edges: &BinEdges) -> Result<String> {
    let mut table = CsvTable::parse(text)?;
    for (column, edge_list) in &edges.columns {
        let idx = table.column_index(column)?;
        let values = table.numeric_column(idx, column)?;
        for (row, v) in values.into_iter().enumerate() {
            table.rows[row][idx] = bin_name(bin_of(v, edge_list));
        }
    }
    Ok(table.render())
}

struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::CsvParse {
                row: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::CsvParse {
                row: i + 1,
                message: e.to_string(),
            })?;
            rows.push(record.iter().map(|s| s.to_string()).collect());
        }
        Ok(CsvTable { header, rows })
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
            })
    }

    fn numeric_column(&self, idx: usize, name: &str) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(row, cells)| {
                cells[idx].parse::<f64>().map_err(|_| Error::CsvParse {
                    row: row + 1,
                    message: format!("column `{name}`: cannot parse `{}` as a number", cells[idx]),
                })
            })
            .collect()
    }

    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
