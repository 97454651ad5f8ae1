//! Importance orderings of all features.
//!
//! Every method returns the same shape: `order` lists the features from
//! most to least relevant. Methods that naturally produce an inverse
//! sequence (backward elimination, greedy max-error addition, p-value
//! elimination) keep that sequence in `raw_sequence` and store the reversed
//! best-to-worst order in `order`.
//!
//! Ties are broken by the lowest feature index everywhere.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::linalg::{coefficient_tests, fit_subset, pivot_free_features, subset_mae};
use crate::stats::pearson;

/// Default significance level for p-value elimination.
pub const DEFAULT_PVALUE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RankingMethod {
    /// Forward selection, adding the feature that minimizes the error.
    #[serde(rename = "RM1")]
    ForwardSelection,
    /// Backward elimination, removing the feature whose removal minimizes the error.
    #[serde(rename = "RM2")]
    BackwardElimination,
    /// Removing the feature whose removal maximizes the error.
    #[serde(rename = "RM3")]
    RemoveMaxError,
    /// Adding the feature that maximizes the error.
    #[serde(rename = "RM4")]
    AddMaxError,
    /// Absolute Pearson correlation with the target.
    #[serde(rename = "RM5")]
    Correlation,
    /// Backward elimination on coefficient t-test p-values.
    #[serde(rename = "PV")]
    PValue,
}

impl RankingMethod {
    pub const ALL: [RankingMethod; 6] = [
        RankingMethod::ForwardSelection,
        RankingMethod::BackwardElimination,
        RankingMethod::RemoveMaxError,
        RankingMethod::AddMaxError,
        RankingMethod::Correlation,
        RankingMethod::PValue,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            RankingMethod::ForwardSelection => "RM1",
            RankingMethod::BackwardElimination => "RM2",
            RankingMethod::RemoveMaxError => "RM3",
            RankingMethod::AddMaxError => "RM4",
            RankingMethod::Correlation => "RM5",
            RankingMethod::PValue => "PV",
        }
    }
}

impl fmt::Display for RankingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RankingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.to_ascii_uppercase().as_str() {
            "RM1" | "FORWARD" => RankingMethod::ForwardSelection,
            "RM2" | "BACKWARD" => RankingMethod::BackwardElimination,
            "RM3" | "REMOVE-MAX" => RankingMethod::RemoveMaxError,
            "RM4" | "ADD-MAX" => RankingMethod::AddMaxError,
            "RM5" | "CORRELATION" => RankingMethod::Correlation,
            "PV" | "PVALUE" => RankingMethod::PValue,
            _ => return Err(Error::InvalidConfig(format!("unknown ranking method '{s}'"))),
        };
        Ok(m)
    }
}

/// MAE of the LS fit on each prefix of an order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// `mae[M - 1]` is the MAE of the fit on the first `M` features.
    pub mae: Vec<f64>,
    /// Prefix lengths `M` whose fit was rank-deficient; their entry repeats
    /// the previous prefix's MAE.
    pub degenerate_prefixes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub method: RankingMethod,
    /// Best-to-worst permutation of all features.
    pub order: FeatureSubset,
    /// The sequence in the order the procedure produced it.
    pub raw_sequence: FeatureSubset,
    pub error_curve: ErrorCurve,
    /// Columns dropped before elimination because the full design left them
    /// without a pivot. They sit at the tail of `order`.
    pub dropped_dependent: FeatureSubset,
    /// For the p-value method: `admissible[M - 1]` is true when every
    /// coefficient of the size-`M` model has p below `alpha_threshold`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pvalue_admissible: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha_threshold: Option<f64>,
}

/// Runs one ranking method with default settings.
pub fn rank(dataset: &Dataset, method: RankingMethod) -> Result<Ranking> {
    match method {
        RankingMethod::ForwardSelection => rank_forward_selection(dataset),
        RankingMethod::BackwardElimination => rank_backward_elimination(dataset),
        RankingMethod::RemoveMaxError => rank_remove_max_error(dataset),
        RankingMethod::AddMaxError => rank_add_max_error(dataset),
        RankingMethod::Correlation => rank_correlation(dataset),
        RankingMethod::PValue => rank_pvalues(dataset, DEFAULT_PVALUE_ALPHA),
    }
}

fn mae_or_none(dataset: &Dataset, subset: &FeatureSubset) -> Result<Option<f64>> {
    match subset_mae(dataset, subset) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degenerate_fit() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluates `f` for every candidate concurrently; output is in candidate order.
fn evaluate_candidates<F>(candidates: &[usize], f: F) -> Result<Vec<Option<f64>>>
where
    F: Fn(usize) -> Result<Option<f64>> + Sync,
{
    candidates.par_iter().map(|&k| f(k)).collect()
}

#[derive(Clone, Copy)]
enum Goal {
    Min,
    Max,
}

/// Best candidate under `goal`; ties go to the lowest index because
/// candidates are ascending and only strict improvements replace the incumbent.
fn pick(candidates: &[usize], values: &[Option<f64>], goal: Goal) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, v) in candidates.iter().zip(values) {
        let Some(v) = *v else { continue };
        let better = match (best, goal) {
            (None, _) => true,
            (Some((_, b)), Goal::Min) => v < b,
            (Some((_, b)), Goal::Max) => v > b,
        };
        if better {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

fn greedy_add(dataset: &Dataset, method: RankingMethod, goal: Goal) -> Result<Vec<usize>> {
    let r = dataset.n_features();
    let mut chosen = FeatureSubset::empty();
    let mut remaining: Vec<usize> = (0..r).collect();
    for step in 1..=r {
        let values = evaluate_candidates(&remaining, |k| mae_or_none(dataset, &chosen.with_appended(k)))?;
        let k = pick(&remaining, &values, goal).ok_or_else(|| Error::DegenerateStep {
            method: method.tag().into(),
            step,
        })?;
        chosen = chosen.with_appended(k);
        remaining.retain(|&i| i != k);
    }
    Ok(chosen.indices().to_vec())
}

/// Removes one feature per step from the full (full-rank part of the) model.
/// Returns `(dropped_dependent, removal_sequence)`.
fn greedy_remove(dataset: &Dataset, method: RankingMethod, goal: Goal) -> Result<(Vec<usize>, Vec<usize>)> {
    let dropped = pivot_free_features(dataset, &dataset.all_features())?;
    let mut current: Vec<usize> = (0..dataset.n_features()).filter(|k| !dropped.contains(k)).collect();
    let mut removed = Vec::with_capacity(current.len());
    let mut step = 1;
    while !current.is_empty() {
        let values = evaluate_candidates(&current, |k| {
            let rest: Vec<usize> = current.iter().copied().filter(|&i| i != k).collect();
            mae_or_none(dataset, &FeatureSubset::new(rest))
        })?;
        let k = pick(&current, &values, goal).ok_or_else(|| Error::DegenerateStep {
            method: method.tag().into(),
            step,
        })?;
        removed.push(k);
        current.retain(|&i| i != k);
        step += 1;
    }
    Ok((dropped, removed))
}

fn finish(
    dataset: &Dataset,
    method: RankingMethod,
    order: Vec<usize>,
    raw: Vec<usize>,
    dropped: Vec<usize>,
) -> Result<Ranking> {
    let order = FeatureSubset::new(order);
    let error_curve = error_curve(dataset, &order)?;
    Ok(Ranking {
        method,
        order,
        raw_sequence: FeatureSubset::new(raw),
        error_curve,
        dropped_dependent: FeatureSubset::new(dropped),
        pvalue_admissible: None,
        alpha_threshold: None,
    })
}

/// RM1: at each step add the unused feature that minimizes the MAE of the
/// growing model.
pub fn rank_forward_selection(dataset: &Dataset) -> Result<Ranking> {
    let seq = greedy_add(dataset, RankingMethod::ForwardSelection, Goal::Min)?;
    finish(dataset, RankingMethod::ForwardSelection, seq.clone(), seq, Vec::new())
}

/// RM2: from the full model, repeatedly remove the feature whose removal
/// leaves the smallest MAE. The last survivor is the most relevant.
pub fn rank_backward_elimination(dataset: &Dataset) -> Result<Ranking> {
    let (dropped, removed) = greedy_remove(dataset, RankingMethod::BackwardElimination, Goal::Min)?;
    let mut order: Vec<usize> = removed.iter().rev().copied().collect();
    order.extend(&dropped);
    let mut raw = dropped.clone();
    raw.extend(&removed);
    finish(dataset, RankingMethod::BackwardElimination, order, raw, dropped)
}

/// RM3: from the full model, repeatedly remove the feature whose removal
/// raises the MAE the most. The first removed is the most relevant.
pub fn rank_remove_max_error(dataset: &Dataset) -> Result<Ranking> {
    let (dropped, removed) = greedy_remove(dataset, RankingMethod::RemoveMaxError, Goal::Max)?;
    let mut order = removed.clone();
    order.extend(&dropped);
    let mut raw = dropped.clone();
    raw.extend(&removed);
    finish(dataset, RankingMethod::RemoveMaxError, order, raw, dropped)
}

/// RM4: at each step add the unused feature that maximizes the MAE of the
/// growing model. The sequence runs worst to best.
pub fn rank_add_max_error(dataset: &Dataset) -> Result<Ranking> {
    let seq = greedy_add(dataset, RankingMethod::AddMaxError, Goal::Max)?;
    let order = seq.iter().rev().copied().collect();
    finish(dataset, RankingMethod::AddMaxError, order, seq, Vec::new())
}

/// |Pearson correlation| of every feature with the target, per feature.
/// Zero-variance features get 0.
pub fn target_correlations(dataset: &Dataset) -> Vec<f64> {
    (0..dataset.n_features())
        .map(|k| pearson(dataset.column(k), dataset.target()).map_or(0.0, f64::abs))
        .collect()
}

/// RM5: features by decreasing |ρ(x_k, y)|.
pub fn rank_correlation(dataset: &Dataset) -> Result<Ranking> {
    let rho = target_correlations(dataset);
    let mut order: Vec<usize> = (0..dataset.n_features()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    finish(dataset, RankingMethod::Correlation, order.clone(), order, Vec::new())
}

/// Whether every feature coefficient of the model on `subset` has
/// p < `alpha_threshold`. Degenerate fits are not admissible.
pub fn all_significant(dataset: &Dataset, subset: &FeatureSubset, alpha_threshold: f64) -> Result<bool> {
    match coefficient_tests(dataset, &subset.sorted()) {
        Ok(t) => Ok(t.p_values.iter().all(|&p| p < alpha_threshold)),
        Err(e) if e.is_degenerate_fit() => Ok(false),
        Err(e) => Err(e),
    }
}

/// Backward stepwise elimination on t-test p-values: repeatedly drop the
/// feature with the largest p-value (smallest |t|) in the current fit.
pub fn rank_pvalues(dataset: &Dataset, alpha_threshold: f64) -> Result<Ranking> {
    if !(alpha_threshold > 0.0 && alpha_threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "p-value threshold must lie in (0, 1), got {alpha_threshold}"
        )));
    }
    let r = dataset.n_features();
    let dropped = pivot_free_features(dataset, &dataset.all_features())?;
    let mut current: Vec<usize> = (0..r).filter(|k| !dropped.contains(k)).collect();
    if dataset.n_rows() < current.len() + 2 {
        return Err(Error::InvalidDataset(format!(
            "p-value ranking needs N >= R + 2 (N = {}, R = {})",
            dataset.n_rows(),
            current.len()
        )));
    }
    let mut admissible = vec![false; r];
    let mut removed = Vec::with_capacity(current.len());
    while !current.is_empty() {
        let tests = coefficient_tests(dataset, &FeatureSubset::new(current.clone()))?;
        admissible[current.len() - 1] = tests.p_values.iter().all(|&p| p < alpha_threshold);
        // |t| ordering is the p-value ordering at fixed df, without the
        // saturation of p near 0 or 1.
        let mut worst = 0;
        for j in 1..current.len() {
            if tests.t_stats[j].abs() < tests.t_stats[worst].abs() {
                worst = j;
            }
        }
        removed.push(current.remove(worst));
    }
    let mut order: Vec<usize> = removed.iter().rev().copied().collect();
    order.extend(&dropped);
    let mut raw = dropped.clone();
    raw.extend(&removed);
    let mut ranking = finish(dataset, RankingMethod::PValue, order, raw, dropped)?;
    ranking.pvalue_admissible = Some(admissible);
    ranking.alpha_threshold = Some(alpha_threshold);
    Ok(ranking)
}

/// MAE of the LS fit on every prefix of `order`.
pub fn error_curve(dataset: &Dataset, order: &FeatureSubset) -> Result<ErrorCurve> {
    let r = order.len();
    order.validate(dataset.n_features())?;
    let prefix_maes: Vec<Option<f64>> = (1..=r)
        .into_par_iter()
        .map(|m| mae_or_none(dataset, &FeatureSubset::new(order.indices()[..m].to_vec())))
        .collect::<Result<_>>()?;
    let mut previous = fit_subset(dataset, &FeatureSubset::empty())?.mae;
    let mut mae = Vec::with_capacity(r);
    let mut degenerate_prefixes = Vec::new();
    for (i, v) in prefix_maes.into_iter().enumerate() {
        match v {
            Some(v) => previous = v,
            None => degenerate_prefixes.push(i + 1),
        }
        mae.push(previous);
    }
    Ok(ErrorCurve {
        mae,
        degenerate_prefixes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::coefficient_tests;
    use rand::Rng;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::seeded_rng(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn exact_predictor_first() -> Dataset {
        let y = noise(1, 12);
        Dataset::from_columns_unlabeled(vec![y.clone(), noise(2, 12)], y).unwrap()
    }

    #[test]
    fn every_method_puts_the_exact_predictor_first() {
        let d = exact_predictor_first();
        for m in RankingMethod::ALL {
            let r = rank(&d, m).unwrap();
            assert_eq!(r.order.indices(), &[0, 1], "{m}");
        }
    }

    #[test]
    fn forward_selection_picks_the_dominant_feature() {
        let (x1, x2, x3) = (noise(3, 20), noise(4, 20), noise(5, 20));
        let y: Vec<f64> = x2.iter().zip(&x3).map(|(a, b)| a + 0.1 * b).collect();
        let d = Dataset::from_columns_unlabeled(vec![x1, x2, x3], y).unwrap();
        // Univariate fits, enumerated.
        let maes: Vec<f64> = (0..3)
            .map(|k| fit_subset(&d, &FeatureSubset::new(vec![k])).unwrap().mae)
            .collect();
        let argmin = (0..3).min_by(|&a, &b| maes[a].total_cmp(&maes[b])).unwrap();
        assert_eq!(argmin, 1);
        assert_eq!(rank_forward_selection(&d).unwrap().order.indices()[0], 1);
    }

    #[test]
    fn inverse_methods_keep_raw_sequences() {
        let d = exact_predictor_first();
        let rm2 = rank_backward_elimination(&d).unwrap();
        assert_eq!(rm2.raw_sequence.indices(), &[1, 0]);
        let rm4 = rank_add_max_error(&d).unwrap();
        assert_eq!(rm4.raw_sequence.indices(), &[1, 0]);
    }

    #[test]
    fn correlation_handles_anticorrelation_and_constants() {
        let d = Dataset::from_columns_unlabeled(
            vec![vec![5.0; 4], vec![3.0, 2.0, 1.0, 0.0], vec![0.1, 0.3, 0.2, 0.5]],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let rho = target_correlations(&d);
        assert_eq!(rho[0], 0.0);
        assert!((rho[1] - 1.0).abs() < 1e-15);
        let r = rank_correlation(&d).unwrap();
        assert_eq!(r.order.indices(), &[1, 2, 0]);
    }

    #[test]
    fn pvalue_ranking_removes_the_null_feature_first() {
        let n = 40;
        let (x1, x2, x3) = (noise(6, n), noise(7, n), noise(8, n));
        let e = noise(9, n);
        let y: Vec<f64> = (0..n).map(|i| 3.0 * x1[i] - 2.0 * x3[i] + 0.05 * e[i]).collect();
        let d = Dataset::from_columns_unlabeled(vec![x1, x2, x3], y).unwrap();
        let r = rank_pvalues(&d, 0.05).unwrap();
        assert_eq!(r.raw_sequence.indices()[0], 1);
        // Hand-computed t for x2 on the full fit: se² = σ̂²·[(XᵀX)⁻¹]_22.
        let t = coefficient_tests(&d, &d.all_features()).unwrap();
        let gram_inv_22 = {
            use nalgebra::DMatrix;
            let x = DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { d.column(j - 1)[i] });
            (x.transpose() * &x).try_inverse().unwrap()[(2, 2)]
        };
        let se = (t.fit.sse() / (n - 4) as f64 * gram_inv_22).sqrt();
        assert!((t.t_stats[1] - t.fit.coefficients[1] / se).abs() < 1e-8);
        let smallest = (0..3)
            .min_by(|&a, &b| t.t_stats[a].abs().total_cmp(&t.t_stats[b].abs()))
            .unwrap();
        assert_eq!(smallest, 1);
        let adm = r.pvalue_admissible.unwrap();
        assert!(adm[1]);
        assert!(!adm[2]);
    }

    #[test]
    fn error_curve_matches_direct_fits() {
        let cols: Vec<Vec<f64>> = (0..3).map(|k| noise(20 + k, 15)).collect();
        let d = Dataset::from_columns_unlabeled(cols, noise(30, 15)).unwrap();
        let curve = error_curve(&d, &d.all_features()).unwrap();
        for m in 1..=3 {
            let direct = fit_subset(&d, &FeatureSubset::new((0..m).collect())).unwrap().mae;
            assert!((curve.mae[m - 1] - direct).abs() < 1e-14);
        }
        assert!(curve.degenerate_prefixes.is_empty());
    }

    #[test]
    fn error_curve_fills_degenerate_prefixes() {
        let a = noise(40, 10);
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let d = Dataset::from_columns_unlabeled(vec![a, b, noise(41, 10)], noise(42, 10)).unwrap();
        let curve = error_curve(&d, &d.all_features()).unwrap();
        assert_eq!(curve.degenerate_prefixes, vec![2, 3]);
        assert_eq!(curve.mae[1], curve.mae[0]);
    }

    #[test]
    fn dependent_columns_go_to_the_tail() {
        let a = noise(50, 12);
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        let y: Vec<f64> = a.iter().zip(noise(51, 12)).map(|(p, q)| p + 0.3 * q).collect();
        let d = Dataset::from_columns_unlabeled(vec![a, noise(52, 12), b], y).unwrap();
        for r in [
            rank_backward_elimination(&d).unwrap(),
            rank_remove_max_error(&d).unwrap(),
            rank_pvalues(&d, 0.05).unwrap(),
        ] {
            assert_eq!(r.dropped_dependent.len(), 1);
            assert_eq!(r.order.indices()[2], r.dropped_dependent.indices()[0]);
        }
    }

    #[test]
    fn forward_selection_errors_when_every_candidate_is_degenerate() {
        let a = noise(60, 8);
        let d = Dataset::from_columns_unlabeled(vec![a.clone(), a], noise(61, 8)).unwrap();
        assert!(matches!(
            rank_forward_selection(&d),
            Err(Error::DegenerateStep { step: 2, .. })
        ));
    }

    #[test]
    fn method_tags_parse() {
        for m in RankingMethod::ALL {
            assert_eq!(m.tag().parse::<RankingMethod>().unwrap(), m);
        }
        assert!("RM9".parse::<RankingMethod>().is_err());
    }
}
