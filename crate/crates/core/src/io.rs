//! Delimited-text ingestion and export of feature tables.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Column-wise feature normalization applied at ingestion. The target is
/// never transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    /// `(x − mean) / sd` with the population standard deviation.
    Zscore,
    /// `(x − min) / (max − min)`.
    Minmax,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Normalization::None),
            "zscore" => Ok(Normalization::Zscore),
            "minmax" => Ok(Normalization::Minmax),
            _ => Err(Error::InvalidConfig(format!("unknown normalization '{s}'"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Zscore => "zscore",
            Normalization::Minmax => "minmax",
        })
    }
}

impl Normalization {
    /// Constant columns map to all zeros under both transforms.
    pub fn apply(&self, column: &[f64]) -> Vec<f64> {
        let n = column.len() as f64;
        match self {
            Normalization::None => column.to_vec(),
            Normalization::Zscore => {
                let mean = column.iter().sum::<f64>() / n;
                let sd = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    column.iter().map(|v| (v - mean) / sd).collect()
                } else {
                    vec![0.0; column.len()]
                }
            }
            Normalization::Minmax => {
                let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    column.iter().map(|v| (v - lo) / (hi - lo)).collect()
                } else {
                    vec![0.0; column.len()]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub target_column: String,
    pub delimiter: u8,
    pub normalize: Normalization,
    /// Columns ignored entirely (e.g. a second target).
    pub exclude: Vec<String>,
}

impl IngestOptions {
    pub fn new(target_column: impl Into<String>) -> Self {
        Self {
            target_column: target_column.into(),
            delimiter: b',',
            normalize: Normalization::None,
            exclude: Vec::new(),
        }
    }
}

/// Reads a headered table. Every column other than the target and the
/// excluded ones becomes a feature, in file order.
pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, options)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, options: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::Parse {
                line: 1,
                column: h.clone(),
                message: "duplicate column name".into(),
            });
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| *h == options.target_column)
        .ok_or_else(|| Error::InvalidConfig(format!("target column '{}' not found", options.target_column)))?;
    for e in &options.exclude {
        if !headers.contains(e) {
            return Err(Error::InvalidConfig(format!("excluded column '{e}' not found")));
        }
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != target_idx && !options.exclude.contains(&headers[i]))
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let mut target = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::Parse {
                    line,
                    column: headers[i].clone(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                column: headers[i].clone(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: headers[i].clone(),
                    message: format!("non-finite value '{raw}'"),
                });
            }
            Ok(v)
        };
        target.push(cell(target_idx)?);
        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            col.push(cell(i)?);
        }
    }
    let labels = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let columns = columns.iter().map(|c| options.normalize.apply(c)).collect();
    Dataset::from_columns(columns, target, labels)
}

/// Writes the dataset as a headered table: features in order, then the target.
pub fn write_csv(dataset: &Dataset, target_label: &str, path: &Path, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_path(path)?;
    let mut header: Vec<&str> = dataset.labels().iter().map(String::as_str).collect();
    header.push(target_label);
    w.write_record(&header)?;
    for i in 0..dataset.n_rows() {
        let mut row: Vec<String> = (0..dataset.n_features())
            .map(|k| format!("{:?}", dataset.column(k)[i]))
            .collect();
        row.push(format!("{:?}", dataset.target()[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
