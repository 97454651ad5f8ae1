//! Dense least-squares fits restricted to feature subsets.
//!
//! Fits use a Householder QR factorization with column pivoting on
//! unit-norm-scaled columns. The intercept column is always the first pivot.
//! A column whose remaining norm after projecting out the earlier pivots
//! falls below [`RANK_TOLERANCE`] (relative to its own norm) makes the
//! design rank-deficient, which is reported as an error rather than
//! silently pseudo-inverted.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};

/// Relative threshold on the pivoted diagonal of R below which a column is
/// treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// The N×(M+1) matrix `[1 | x_k1 | ... | x_kM]`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Vec<f64>,
    n_rows: usize,
    subset: FeatureSubset,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.subset.len() + 1
    }

    pub fn subset(&self) -> &FeatureSubset {
        &self.subset
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `Xᵀv`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_cols()).map(|j| dot(self.column(j), v)).collect()
    }
}

/// Selects the intercept column plus the subset's feature columns, in subset order.
pub fn build_design_matrix(dataset: &Dataset, subset: &FeatureSubset) -> Result<DesignMatrix> {
    subset.validate(dataset.n_features())?;
    let n = dataset.n_rows();
    let mut values = Vec::with_capacity(n * (subset.len() + 1));
    values.resize(n, 1.0);
    for &k in subset.indices() {
        values.extend_from_slice(dataset.column(k));
    }
    Ok(DesignMatrix {
        values,
        n_rows: n,
        subset: subset.clone(),
    })
}

/// Like [`build_design_matrix`] but keeps only the given rows (0-based, in order).
pub fn build_design_matrix_rows(dataset: &Dataset, subset: &FeatureSubset, rows: &[usize]) -> Result<DesignMatrix> {
    subset.validate(dataset.n_features())?;
    let n = rows.len();
    let mut values = Vec::with_capacity(n * (subset.len() + 1));
    values.resize(n, 1.0);
    for &k in subset.indices() {
        let col = dataset.column(k);
        values.extend(rows.iter().map(|&i| col[i]));
    }
    Ok(DesignMatrix {
        values,
        n_rows: n,
        subset: subset.clone(),
    })
}

/// A least-squares fit and its in-sample error metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    /// Aligned with the subset order of the design matrix.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r_squared: f64,
    /// Total sum of squares of the target about its mean.
    pub tss: f64,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn sse(&self) -> f64 {
        self.mse * self.n() as f64
    }

    /// Residuals vanish relative to the target spread (or the target is
    /// constant and reproduced exactly).
    pub fn is_perfect(&self) -> bool {
        self.mse <= 1e-20 * self.tss / self.n() as f64 || self.mse == 0.0
    }
}

/// Householder QR with column pivoting of a column-scaled design matrix.
struct PivotedQr {
    n: usize,
    p: usize,
    /// Factored matrix: R above the diagonal, Householder vectors on and below.
    a: Vec<f64>,
    r_diag: Vec<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the design column placed at pivot position `k`.
    perm: Vec<usize>,
    scale: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    fn factor(design: &DesignMatrix) -> Self {
        let n = design.n_rows;
        let p = design.n_cols();
        let mut a = design.values.clone();
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let col = &mut a[j * n..(j + 1) * n];
            let norm = norm2(col);
            scale[j] = norm;
            if norm > 0.0 {
                col.iter_mut().for_each(|v| *v /= norm);
            }
        }
        let mut perm: Vec<usize> = (0..p).collect();
        let mut r_diag = vec![0.0; p];
        let mut tau = vec![0.0; p];
        let mut rank = p.min(n);
        let steps = p.min(n);
        for k in 0..steps {
            // The intercept stays the first pivot.
            let mut piv = k;
            if k > 0 {
                let mut best = -1.0;
                for j in k..p {
                    let r = norm2(&a[j * n + k..(j + 1) * n]);
                    if r > best {
                        best = r;
                        piv = j;
                    }
                }
            }
            if piv != k {
                for i in 0..n {
                    a.swap(k * n + i, piv * n + i);
                }
                perm.swap(k, piv);
                scale.swap(k, piv);
            }
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let v = &mut head[k * n + k..];
            let norm = norm2(v);
            if norm <= RANK_TOLERANCE {
                rank = k;
                break;
            }
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vv = dot(v, v);
            let t = 2.0 / vv;
            tau[k] = t;
            r_diag[k] = alpha;
            for j in (k + 1)..p {
                let c = &mut tail[(j - k - 1) * n + k..(j - k) * n];
                let s = t * dot(v, c);
                c.iter_mut().zip(v.iter()).for_each(|(ci, vi)| *ci -= s * vi);
            }
        }
        if n < p {
            rank = rank.min(n);
        }
        Self {
            n,
            p,
            a,
            r_diag,
            tau,
            perm,
            scale,
            rank,
        }
    }

    fn is_full_rank(&self) -> bool {
        self.rank == self.p
    }

    fn householder(&self, k: usize) -> &[f64] {
        &self.a[k * self.n + k..(k + 1) * self.n]
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.r_diag[i]
        } else {
            self.a[j * self.n + i]
        }
    }

    /// Overwrites `y` with `Qᵀy`.
    fn apply_qt(&self, y: &mut [f64]) {
        for k in 0..self.p {
            let v = self.householder(k);
            let seg = &mut y[k..];
            let s = self.tau[k] * dot(v, seg);
            seg.iter_mut().zip(v).for_each(|(yi, vi)| *yi -= s * vi);
        }
    }

    /// Overwrites `y` with `Qy`.
    fn apply_q(&self, y: &mut [f64]) {
        for k in (0..self.p).rev() {
            let v = self.householder(k);
            let seg = &mut y[k..];
            let s = self.tau[k] * dot(v, seg);
            seg.iter_mut().zip(v).for_each(|(yi, vi)| *yi -= s * vi);
        }
    }

    /// Solves the triangular system and maps back to design-column order.
    /// Returns `(beta, residuals)`.
    fn solve(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.p;
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut z = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = qty[i];
            for (j, zj) in z.iter().enumerate().skip(i + 1) {
                s -= self.r(i, j) * zj;
            }
            z[i] = s / self.r_diag[i];
        }
        let mut beta = vec![0.0; p];
        for k in 0..p {
            beta[self.perm[k]] = z[k] / self.scale[k];
        }
        let mut resid = qty;
        resid[..p].iter_mut().for_each(|v| *v = 0.0);
        self.apply_q(&mut resid);
        (beta, resid)
    }

    /// Diagonal of `(XᵀX)⁻¹` in design-column order.
    fn inverse_gram_diagonal(&self) -> Vec<f64> {
        let p = self.p;
        // Row norms of R⁻¹; R⁻¹ built column by column.
        let mut rinv = vec![0.0; p * p];
        for j in 0..p {
            rinv[j * p + j] = 1.0 / self.r_diag[j];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for l in (i + 1)..=j {
                    s += self.r(i, l) * rinv[j * p + l];
                }
                rinv[j * p + i] = -s / self.r_diag[i];
            }
        }
        let mut diag = vec![0.0; p];
        for k in 0..p {
            let row_norm2: f64 = (k..p).map(|j| rinv[j * p + k].powi(2)).sum();
            diag[self.perm[k]] = row_norm2 / (self.scale[k] * self.scale[k]);
        }
        diag
    }

    fn rank_error(&self, design: &DesignMatrix) -> Error {
        Error::RankDeficient {
            subset: design.subset.one_based(),
            rank: self.rank,
            columns: self.p,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits `target ≈ design·β` by least squares.
pub fn fit_least_squares(design: &DesignMatrix, target: &[f64]) -> Result<FitResult> {
    if target.len() != design.n_rows {
        return Err(Error::InvalidDataset(format!(
            "target has {} rows, design has {}",
            target.len(),
            design.n_rows
        )));
    }
    let qr = PivotedQr::factor(design);
    if !qr.is_full_rank() {
        return Err(qr.rank_error(design));
    }
    let (beta, residuals) = qr.solve(target);

    let n = target.len() as f64;
    let y_mean = mean(target);
    let constant_target = target.iter().all(|&v| v == target[0]);
    let tss = if constant_target {
        0.0
    } else {
        target.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>()
    };
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let mae = residuals.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mse = sse / n;
    let r_squared = if constant_target {
        let scale = target[0].abs().max(1.0);
        if mse.sqrt() > 1e-12 * scale {
            return Err(Error::ZeroVarianceTarget);
        }
        0.0
    } else {
        1.0 - sse / tss
    };

    debug_assert!({
        let xte = design.transpose_mul(&residuals);
        let worst = xte.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst <= 1e-8 * design.frobenius_norm() * norm2(target) + f64::MIN_POSITIVE
    });

    Ok(FitResult {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        residuals,
        mae,
        mse,
        rmse: mse.sqrt(),
        r_squared,
        tss,
    })
}

/// Fits the subset of a dataset directly.
pub fn fit_subset(dataset: &Dataset, subset: &FeatureSubset) -> Result<FitResult> {
    let design = build_design_matrix(dataset, subset)?;
    fit_least_squares(&design, dataset.target())
}

/// Features of `subset` that the pivoted factorization leaves without a
/// pivot, in ascending index order. Empty when the design is full rank.
pub fn pivot_free_features(dataset: &Dataset, subset: &FeatureSubset) -> Result<Vec<usize>> {
    let design = build_design_matrix(dataset, subset)?;
    let qr = PivotedQr::factor(&design);
    let mut free: Vec<usize> = qr.perm[qr.rank..]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| subset.indices()[c - 1])
        .collect();
    free.sort_unstable();
    Ok(free)
}

/// Parameters of the cost `‖e‖_p^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub p: f64,
    pub alpha: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self { p: 1.0, alpha: 1.0 }
    }
}

impl CostSpec {
    pub fn new(p: f64, alpha: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite() && alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cost needs p > 0 and alpha > 0, got p = {p}, alpha = {alpha}"
            )));
        }
        Ok(Self { p, alpha })
    }

    /// `‖residuals‖_p^α`.
    pub fn of_residuals(&self, residuals: &[f64]) -> f64 {
        let s: f64 = if self.p == 1.0 {
            residuals.iter().map(|e| e.abs()).sum()
        } else if self.p == 2.0 {
            residuals.iter().map(|e| e * e).sum()
        } else {
            residuals.iter().map(|e| e.abs().powf(self.p)).sum()
        };
        let exponent = self.alpha / self.p;
        if exponent == 1.0 {
            s
        } else {
            s.powf(exponent)
        }
    }
}

/// Cost of the LS fit on `subset`. The fit runs on the ascending-sorted
/// subset so the value depends only on the set of features.
pub fn subset_cost(dataset: &Dataset, subset: &FeatureSubset, cost: CostSpec) -> Result<f64> {
    let fit = fit_subset(dataset, &subset.sorted())?;
    Ok(cost.of_residuals(&fit.residuals))
}

/// MAE of the LS fit on the set of features in `subset` (order-independent).
pub fn subset_mae(dataset: &Dataset, subset: &FeatureSubset) -> Result<f64> {
    Ok(fit_subset(dataset, &subset.sorted())?.mae)
}

/// Per-coefficient t-test results for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTests {
    pub fit: FitResult,
    /// Residual degrees of freedom `N − (M+1)`.
    pub df: usize,
    pub sigma2: f64,
    /// Standard errors, t-statistics and two-sided p-values of the feature
    /// coefficients (intercept excluded), aligned with the subset order.
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
}

/// OLS fit plus t-tests `t_k = β_k / se(β_k)` with `se² = σ̂²·[(XᵀX)⁻¹]_kk`,
/// `σ̂² = SSE / (N − M − 1)`.
pub fn coefficient_tests(dataset: &Dataset, subset: &FeatureSubset) -> Result<CoefficientTests> {
    let design = build_design_matrix(dataset, subset)?;
    let qr = PivotedQr::factor(&design);
    if !qr.is_full_rank() {
        return Err(qr.rank_error(&design));
    }
    let fit = fit_least_squares(&design, dataset.target())?;
    let n = dataset.n_rows();
    let p = design.n_cols();
    if n <= p {
        return Err(Error::InvalidDataset(format!(
            "t-tests need N > M + 1 (N = {n}, M + 1 = {p})"
        )));
    }
    let df = n - p;
    let sigma2 = fit.sse() / df as f64;
    let diag = qr.inverse_gram_diagonal();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let mut std_errors = Vec::with_capacity(p - 1);
    let mut t_stats = Vec::with_capacity(p - 1);
    let mut p_values = Vec::with_capacity(p - 1);
    for (j, &beta) in fit.coefficients.iter().enumerate() {
        let se = (sigma2 * diag[j + 1]).sqrt();
        let t = beta / se;
        let t = if t.is_nan() { 0.0 } else { t };
        std_errors.push(se);
        t_stats.push(t);
        p_values.push((2.0 * dist.sf(t.abs())).min(1.0));
    }
    Ok(CoefficientTests {
        fit,
        df,
        sigma2,
        std_errors,
        t_stats,
        p_values,
    })
}
