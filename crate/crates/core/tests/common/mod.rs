#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use varsel::rng::seeded_rng;
use varsel::{Dataset, FeatureSubset};

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `y = X w + noise·ε` with standard normal features and `w` drawn from
/// `[-2, 2]`; feature columns are scaled by `scale`.
pub fn random_dataset(seed: u64, n: usize, r: usize, noise: f64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let w: Vec<f64> = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
    let columns: Vec<Vec<f64>> = (0..r).map(|_| (0..n).map(|_| gaussian(&mut rng)).collect()).collect();
    let target = (0..n)
        .map(|i| (0..r).map(|k| w[k] * columns[k][i]).sum::<f64>() + noise * gaussian(&mut rng))
        .collect();
    Dataset::from_columns_unlabeled(columns, target).unwrap()
}

/// Target built from the listed features only, plus noise.
pub fn sparse_dataset(seed: u64, n: usize, r: usize, truth: &[(usize, f64)], noise: f64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let columns: Vec<Vec<f64>> = (0..r).map(|_| (0..n).map(|_| gaussian(&mut rng)).collect()).collect();
    let target = (0..n)
        .map(|i| truth.iter().map(|&(k, b)| b * columns[k][i]).sum::<f64>() + noise * gaussian(&mut rng))
        .collect();
    Dataset::from_columns_unlabeled(columns, target).unwrap()
}

/// Design matrix `[1 | X_S]` in nalgebra form.
pub fn design(dataset: &Dataset, subset: &[usize]) -> DMatrix<f64> {
    let n = dataset.n_rows();
    DMatrix::from_fn(n, subset.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            dataset.column(subset[j - 1])[i]
        }
    })
}

/// Least squares through the SVD pseudo-inverse of the unit-norm-column
/// design: `(β, residuals)`. Without the column scaling the SVD loses
/// digits on columns whose magnitudes differ by orders of magnitude.
pub fn oracle_fit(dataset: &Dataset, subset: &[usize]) -> (DVector<f64>, DVector<f64>) {
    let x = design(dataset, subset);
    let y = DVector::from_column_slice(dataset.target());
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let scaled = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / norms[j]);
    let gamma = scaled.pseudo_inverse(1e-13).unwrap() * &y;
    let beta = DVector::from_fn(gamma.len(), |j, _| gamma[j] / norms[j]);
    let resid = &y - &x * &beta;
    (beta, resid)
}

pub fn oracle_mae(dataset: &Dataset, subset: &[usize]) -> f64 {
    let (_, e) = oracle_fit(dataset, subset);
    e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64
}

pub fn oracle_mse(dataset: &Dataset, subset: &[usize]) -> f64 {
    let (_, e) = oracle_fit(dataset, subset);
    e.norm_squared() / e.len() as f64
}

pub fn subset(indices: &[usize]) -> FeatureSubset {
    FeatureSubset::new(indices.to_vec())
}
