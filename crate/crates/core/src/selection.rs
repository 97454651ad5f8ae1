//! Choosing the number of features along a ranking.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::linalg::{fit_subset, FitResult};
use crate::ranking::{all_significant, Ranking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Aic,
    Bic,
    Hqic,
    Pvalue,
}

impl Criterion {
    pub const INFORMATION: [Criterion; 3] = [Criterion::Aic, Criterion::Bic, Criterion::Hqic];

    /// Penalty weight ξ in `−2 log L + 2ξM`.
    pub fn xi(&self, n: usize) -> Option<f64> {
        let n = n as f64;
        match self {
            Criterion::Aic => Some(1.0),
            Criterion::Bic => Some(n.ln() / 2.0),
            Criterion::Hqic => Some(n.ln().ln()),
            Criterion::Pvalue => None,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Hqic => "HQIC",
            Criterion::Pvalue => "PVALUE",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AIC" => Ok(Criterion::Aic),
            "BIC" => Ok(Criterion::Bic),
            "HQIC" => Ok(Criterion::Hqic),
            "PVALUE" | "PV" => Ok(Criterion::Pvalue),
            _ => Err(Error::InvalidConfig(format!("unknown criterion '{s}'"))),
        }
    }
}

/// `−2 log p(y | β̂)` for Gaussian noise at the MLE `σ̂² = MSE`:
/// `n·ln(2π·σ̂²) + n`. A perfect fit maps to `−∞`.
pub fn gaussian_fitting_term(fit: &FitResult, n: usize) -> f64 {
    if fit.is_perfect() {
        return f64::NEG_INFINITY;
    }
    let n = n as f64;
    n * (2.0 * std::f64::consts::PI * fit.mse).ln() + n
}

/// Criterion value `−2 log p(y|β̂) + 2ξm`, with `m` the penalized parameter count.
pub fn information_criterion_value(fit: &FitResult, n: usize, m: usize, criterion: Criterion) -> Result<f64> {
    let xi = criterion
        .xi(n)
        .ok_or_else(|| Error::InvalidConfig("the p-value rule has no criterion value".into()))?;
    if n < m + 2 {
        return Err(Error::InvalidConfig(format!(
            "information criteria need n >= m + 2 (n = {n}, m = {m})"
        )));
    }
    Ok(gaussian_fitting_term(fit, n) + 2.0 * xi * m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCurve {
    /// Criterion value per prefix size (`values[M - 1]`). `−∞` marks a
    /// perfect fit, `+∞` a degenerate prefix.
    Values(#[serde(with = "crate::serde_float::vec")] Vec<f64>),
    /// P-value admissibility per prefix size.
    Flags(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub criterion: Criterion,
    /// Selected number of features. Zero only for the p-value rule when no
    /// prefix keeps all coefficients significant.
    pub m_star: usize,
    pub curve: SelectionCurve,
}

/// Fits every prefix of `order` concurrently; degenerate prefixes give `None`.
fn prefix_fits(dataset: &Dataset, order: &FeatureSubset) -> Result<Vec<Option<FitResult>>> {
    (1..=order.len())
        .into_par_iter()
        .map(
            |m| match fit_subset(dataset, &FeatureSubset::new(order.indices()[..m].to_vec()).sorted()) {
                Ok(f) => Ok(Some(f)),
                Err(e) if e.is_degenerate_fit() => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// Minimizes an information criterion over the prefixes of a ranking.
/// `penalty_offset` is added to the feature count in the penalty (0 counts
/// features only).
pub fn select_order_with_offset(
    dataset: &Dataset,
    ranking: &Ranking,
    criterion: Criterion,
    penalty_offset: usize,
) -> Result<OrderSelection> {
    if criterion == Criterion::Pvalue {
        return pvalue_stopping(dataset, ranking, ranking.alpha_threshold.unwrap_or(0.05));
    }
    let n = dataset.n_rows();
    let fits = prefix_fits(dataset, &ranking.order)?;
    let mut values = Vec::with_capacity(fits.len());
    for (i, fit) in fits.iter().enumerate() {
        let m = i + 1;
        let v = match fit {
            Some(f) if n >= m + penalty_offset + 2 => information_criterion_value(f, n, m + penalty_offset, criterion)?,
            _ => f64::INFINITY,
        };
        values.push(v);
    }
    let mut m_star = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < f64::INFINITY && (m_star == 0 || v < values[m_star - 1]) {
            m_star = i + 1;
        }
    }
    if m_star == 0 {
        return Err(Error::DegenerateStep {
            method: format!("{criterion} order selection"),
            step: 1,
        });
    }
    Ok(OrderSelection {
        criterion,
        m_star,
        curve: SelectionCurve::Values(values),
    })
}

pub fn select_order(dataset: &Dataset, ranking: &Ranking, criterion: Criterion) -> Result<OrderSelection> {
    select_order_with_offset(dataset, ranking, criterion, 0)
}

/// Size at which backward p-value elimination stops: the largest prefix of
/// the ranking whose fit has every coefficient with p < `alpha_threshold`.
pub fn pvalue_stopping(dataset: &Dataset, ranking: &Ranking, alpha_threshold: f64) -> Result<OrderSelection> {
    let order = ranking.order.indices();
    let flags: Vec<bool> = (1..=order.len())
        .into_par_iter()
        .map(|m| all_significant(dataset, &FeatureSubset::new(order[..m].to_vec()), alpha_threshold))
        .collect::<Result<_>>()?;
    let m_star = flags.iter().rposition(|&f| f).map_or(0, |i| i + 1);
    Ok(OrderSelection {
        criterion: Criterion::Pvalue,
        m_star,
        curve: SelectionCurve::Flags(flags),
    })
}

/// Prefix size at the point of maximum Menger curvature of the log-log
/// error curve. An annotation for reports; never used for selection.
pub fn elbow_annotation(mae: &[f64]) -> Option<usize> {
    let pts: Vec<(usize, f64, f64)> = mae
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (i + 1, ((i + 1) as f64).ln(), v.ln()))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for w in pts.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let (abx, aby) = (b.1 - a.1, b.2 - a.2);
        let (acx, acy) = (c.1 - a.1, c.2 - a.2);
        let (bcx, bcy) = (c.1 - b.1, c.2 - b.2);
        let cross = (abx * acy - aby * acx).abs();
        let denom = (abx.hypot(aby)) * (bcx.hypot(bcy)) * (acx.hypot(acy));
        if denom <= 0.0 {
            continue;
        }
        let k = 2.0 * cross / denom;
        if best.is_none_or(|(_, bk)| k > bk) {
            best = Some((b.0, k));
        }
    }
    best.map(|(m, _)| m)
}
