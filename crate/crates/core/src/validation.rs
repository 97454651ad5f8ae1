//! Monte Carlo cross-validation, labeled model fits, and the feature
//! correlation graph.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::linalg::{build_design_matrix_rows, fit_least_squares, fit_subset, FitResult};
use crate::rng::stream_rng;
use crate::stats::{mean, pearson, std_dev};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_CV_RUNS: usize = 20_000;
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.95;

/// Which mean the test-set R² is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Reference {
    #[default]
    TestMean,
    TrainMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            std_dev: std_dev(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub subset: FeatureSubset,
    pub runs: usize,
    pub train_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub seed: u64,
    pub r2_reference: R2Reference,
    pub mae: MetricSummary,
    pub mse: MetricSummary,
    pub rmse: MetricSummary,
    pub r_squared: MetricSummary,
    /// Runs whose training fit stayed degenerate after one resample.
    pub skipped_runs: usize,
    /// Set when more than 1% of the runs were skipped.
    pub warning: Option<String>,
}

/// Test-set metrics of one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r_squared: f64,
}

/// Row split of one run: `(train, test)`, both ascending.
pub fn draw_split<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, n_train: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = index::sample(rng, n, n_train).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; n];
    train.iter().for_each(|&i| in_train[i] = true);
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    (train, test)
}

/// Fits on `train` rows and scores on `test` rows.
pub fn score_split(
    dataset: &Dataset,
    subset: &FeatureSubset,
    train: &[usize],
    test: &[usize],
    r2_reference: R2Reference,
) -> Result<SplitScore> {
    let design = build_design_matrix_rows(dataset, subset, train)?;
    let y = dataset.target();
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let fit = fit_least_squares(&design, &y_train)?;
    let cols: Vec<&[f64]> = subset.indices().iter().map(|&k| dataset.column(k)).collect();
    let n_test = test.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for &i in test {
        let pred = fit.intercept + cols.iter().zip(&fit.coefficients).map(|(c, b)| c[i] * b).sum::<f64>();
        let e = y[i] - pred;
        abs += e.abs();
        sq += e * e;
    }
    let reference = match r2_reference {
        R2Reference::TestMean => test.iter().map(|&i| y[i]).sum::<f64>() / n_test,
        R2Reference::TrainMean => y_train.iter().sum::<f64>() / y_train.len() as f64,
    };
    let tss: f64 = test.iter().map(|&i| (y[i] - reference).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - sq / tss } else { 0.0 };
    let mse = sq / n_test;
    Ok(SplitScore {
        mae: abs / n_test,
        mse,
        rmse: mse.sqrt(),
        r_squared,
    })
}

/// Repeated random train/test splits; per-run generators come from
/// `stream_rng(seed, run)`, so the report does not depend on scheduling.
pub fn monte_carlo_cv(
    dataset: &Dataset,
    subset: &FeatureSubset,
    train_fraction: f64,
    runs: usize,
    seed: u64,
    r2_reference: R2Reference,
) -> Result<CvReport> {
    subset.validate(dataset.n_features())?;
    if runs == 0 {
        return Err(Error::InvalidConfig("cross-validation needs at least one run".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.n_rows();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train < subset.len() + 2 || n_train >= n {
        return Err(Error::InvalidConfig(format!(
            "a {n_train}/{} split cannot fit {} features with a non-empty test set",
            n - n_train,
            subset.len()
        )));
    }
    let scores: Vec<Option<SplitScore>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream_rng(seed, run as u64);
            for _attempt in 0..2 {
                let (train, test) = draw_split(&mut rng, n, n_train);
                match score_split(dataset, subset, &train, &test, r2_reference) {
                    Ok(s) => return Ok(Some(s)),
                    Err(e) if e.is_degenerate_fit() => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<SplitScore> = scores.iter().flatten().copied().collect();
    let skipped_runs = runs - kept.len();
    if kept.is_empty() {
        return Err(Error::DegenerateStep {
            method: "cross-validation".into(),
            step: 1,
        });
    }
    let pick = |f: fn(&SplitScore) -> f64| kept.iter().map(f).collect::<Vec<f64>>();
    let warning = (skipped_runs * 100 > runs)
        .then(|| format!("{skipped_runs} of {runs} runs skipped after degenerate training fits"));
    Ok(CvReport {
        subset: subset.clone(),
        runs,
        train_fraction,
        train_rows: n_train,
        test_rows: n - n_train,
        seed,
        r2_reference,
        mae: MetricSummary::of(&pick(|s| s.mae)),
        mse: MetricSummary::of(&pick(|s| s.mse)),
        rmse: MetricSummary::of(&pick(|s| s.rmse)),
        r_squared: MetricSummary::of(&pick(|s| s.r_squared)),
        skipped_runs,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEdge {
    /// 1-based feature indices, `i < j`.
    pub i: usize,
    pub j: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGraph {
    pub threshold: f64,
    pub edges: Vec<CorrelationEdge>,
}

/// Pairs of features with `|ρ| ≥ threshold`. Zero-variance columns have no edges.
pub fn correlation_graph(dataset: &Dataset, threshold: f64) -> CorrelationGraph {
    let r = dataset.n_features();
    let edges = (0..r)
        .into_par_iter()
        .flat_map_iter(|i| {
            ((i + 1)..r).filter_map(move |j| {
                let rho = pearson(dataset.column(i), dataset.column(j))?;
                (rho.abs() >= threshold).then_some(CorrelationEdge {
                    i: i + 1,
                    j: j + 1,
                    rho,
                })
            })
        })
        .collect();
    CorrelationGraph { threshold, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCoefficient {
    /// 1-based feature index.
    pub feature: usize,
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub subset: FeatureSubset,
    pub intercept: f64,
    pub coefficients: Vec<LabeledCoefficient>,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r_squared: f64,
}

/// Full-data fit of `subset` with coefficients keyed by feature label.
pub fn fit_named_model(dataset: &Dataset, subset: &FeatureSubset) -> Result<(FitResult, NamedModel)> {
    let fit = fit_subset(dataset, subset)?;
    let coefficients = subset
        .indices()
        .iter()
        .zip(&fit.coefficients)
        .map(|(&k, &value)| LabeledCoefficient {
            feature: k + 1,
            label: dataset.label(k).to_string(),
            value,
        })
        .collect();
    let model = NamedModel {
        subset: subset.clone(),
        intercept: fit.intercept,
        coefficients,
        mae: fit.mae,
        mse: fit.mse,
        rmse: fit.rmse,
        r_squared: fit.r_squared,
    };
    Ok((fit, model))
}
