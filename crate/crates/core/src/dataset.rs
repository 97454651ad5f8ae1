//! Feature tables and feature subsets.
//!
//! Feature indices are 0-based everywhere inside the library. Human-facing
//! output (reports, CLI arguments, error messages) uses 1-based indices so
//! that feature `113` is the 113th column of the table.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An N×R feature table with one target vector.
///
/// Features are stored column-major so that a feature column is a contiguous
/// slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    target: Vec<f64>,
    labels: Vec<String>,
    n_rows: usize,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset from feature columns.
    pub fn from_columns(columns: Vec<Vec<f64>>, target: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        let n_rows = target.len();
        let n_features = columns.len();
        if labels.len() != n_features {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} feature columns",
                labels.len(),
                n_features
            )));
        }
        if let Some((k, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::InvalidDataset(format!(
                "feature column {} has {} rows, target has {}",
                k + 1,
                c.len(),
                n_rows
            )));
        }
        let features = columns.into_iter().flatten().collect();
        Self::validate_and_build(features, target, labels, n_rows, n_features)
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(rows: &[Vec<f64>], target: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        let n_features = labels.len();
        if rows.len() != target.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows for {} targets",
                rows.len(),
                target.len()
            )));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); n_features];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidDataset(format!(
                    "row {} has {} values, expected {}",
                    i + 1,
                    row.len(),
                    n_features
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::from_columns(columns, target, labels)
    }

    /// Builds a dataset with generated labels `x1..xR`.
    pub fn from_columns_unlabeled(columns: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let labels = (1..=columns.len()).map(|k| format!("x{k}")).collect();
        Self::from_columns(columns, target, labels)
    }

    fn validate_and_build(
        features: Vec<f64>,
        target: Vec<f64>,
        labels: Vec<String>,
        n_rows: usize,
        n_features: usize,
    ) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        if n_rows < n_features + 1 {
            return Err(Error::InvalidDataset(format!(
                "need at least R + 1 = {} rows, got {}",
                n_features + 1,
                n_rows
            )));
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite target in row {}", i + 1)));
        }
        if let Some(p) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value in row {}, feature '{}'",
                p % n_rows + 1,
                labels[p / n_rows]
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate label '{l}'")));
            }
        }
        Ok(Self {
            features,
            target,
            labels,
            n_rows,
            n_features,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    /// Feature column `k` (0-based).
    pub fn column(&self, k: usize) -> &[f64] {
        &self.features[k * self.n_rows..(k + 1) * self.n_rows]
    }

    /// Returns a copy with feature columns rearranged: column `j` of the
    /// result is column `perm[j]` of `self`.
    pub fn permute_features(&self, perm: &[usize]) -> Result<Self> {
        let columns = perm.iter().map(|&k| self.column(k).to_vec()).collect();
        let labels = perm.iter().map(|&k| self.labels[k].clone()).collect();
        Self::from_columns(columns, self.target.clone(), labels)
    }

    /// Returns a copy with `f` applied to every feature column.
    pub fn map_columns(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let columns = (0..self.n_features).map(|k| f(k, self.column(k))).collect();
        Self::from_columns(columns, self.target.clone(), self.labels.clone())
    }

    /// The full subset `[0, 1, ..., R-1]`.
    pub fn all_features(&self) -> FeatureSubset {
        FeatureSubset((0..self.n_features).collect())
    }
}

/// An ordered list of distinct 0-based feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    /// Wraps 0-based indices without validation against a dataset.
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a subset from 1-based indices.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidSubset {
                subset: indices.to_vec(),
                reason: "feature indices are 1-based".into(),
            });
        }
        Ok(Self(indices.iter().map(|&k| k - 1).collect()))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.contains(&k)
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|k| k + 1).collect()
    }

    /// Indices in ascending order.
    pub fn sorted(&self) -> FeatureSubset {
        let mut v = self.0.clone();
        v.sort_unstable();
        Self(v)
    }

    pub fn with_appended(&self, k: usize) -> FeatureSubset {
        let mut v = self.0.clone();
        v.push(k);
        Self(v)
    }

    pub fn without(&self, k: usize) -> FeatureSubset {
        Self(self.0.iter().copied().filter(|&i| i != k).collect())
    }

    pub fn with_position(&self, j: usize, k: usize) -> FeatureSubset {
        let mut v = self.0.clone();
        v[j] = k;
        Self(v)
    }

    /// Checks distinctness and range against a dataset with `n_features` columns.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        let mut seen = vec![false; n_features];
        for &k in &self.0 {
            if k >= n_features {
                return Err(Error::InvalidSubset {
                    subset: self.one_based(),
                    reason: format!("index {} outside [1, {}]", k + 1, n_features),
                });
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidSubset {
                    subset: self.one_based(),
                    reason: format!("index {} repeated", k + 1),
                });
            }
        }
        Ok(())
    }
}

impl From<Vec<usize>> for FeatureSubset {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", k + 1)?;
        }
        write!(f, "]")
    }
}

/// Serialized as 1-based indices.
impl Serialize for FeatureSubset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureSubset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        FeatureSubset::from_one_based(&v).map_err(serde::de::Error::custom)
    }
}
