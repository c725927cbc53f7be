//! Weak classifier pool: small logistic regressions over one or two features.
//!
//! Each classifier maps a row to `2·σ(b + a·x_subset) − 1 ∈ [-1, 1]`.
//! The pool is every single feature plus, optionally, every unordered pair,
//! truncated to the best `max_classifiers` by in-sample AUC.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::model::metrics::auc;

/// L2 penalty applied to the slope coefficients (not the intercept).
pub const RIDGE: f64 = 1e-4;

const MAX_HALVINGS: usize = 60;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WeakError {
    #[error("logistic fit needs both classes in the training data")]
    SingleClass,
    #[error("invalid feature subset {indices:?} for {n_features} features")]
    InvalidFeatures { indices: Vec<usize>, n_features: usize },
    #[error("classifier pool is empty")]
    EmptyPool,
    #[error("pool config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub feature_indices: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub train_auc: f64,
    /// False when the Newton iteration hit its cap before the gradient
    /// tolerance was met. The classifier is still usable.
    #[serde(default = "yes")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

impl WeakClassifier {
    pub fn logit(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.intercept
            + self
                .feature_indices
                .iter()
                .zip(&self.coefficients)
                .map(|(&j, &a)| a * row[j])
                .sum::<f64>()
    }

    /// `2·σ(z) − 1`, computed as `tanh(z / 2)`.
    pub fn evaluate(&self, row: ArrayView1<'_, f64>) -> f64 {
        score_from_logit(self.logit(row))
    }

    pub fn max_feature_index(&self) -> usize {
        self.feature_indices.iter().copied().max().unwrap_or(0)
    }
}

#[inline]
pub fn score_from_logit(z: f64) -> f64 {
    (0.5 * z).tanh()
}

pub fn evaluate(wc: &WeakClassifier, row: ArrayView1<'_, f64>) -> f64 {
    wc.evaluate(row)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub include_pairs: bool,
    pub max_classifiers: usize,
    pub logistic_max_iters: usize,
    pub logistic_tolerance: f64,
    /// Carried for reproducibility records; candidate enumeration is exhaustive.
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            include_pairs: true,
            max_classifiers: 1000,
            logistic_max_iters: 100,
            logistic_tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<(), WeakError> {
        if self.max_classifiers == 0 {
            return Err(WeakError::InvalidConfig("max_classifiers must be at least 1".into()));
        }
        if self.logistic_max_iters == 0 {
            return Err(WeakError::InvalidConfig("logistic_max_iters must be at least 1".into()));
        }
        if self.logistic_tolerance.is_nan() || self.logistic_tolerance <= 0.0 {
            return Err(WeakError::InvalidConfig("logistic_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Column-major copy of the features plus ±1 labels, shared by every fit.
struct Columns {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Columns {
    fn of(ds: &Dataset) -> Self {
        let cols = ds.features().columns().into_iter().map(|c| c.to_vec()).collect();
        let y = ds.labels().iter().map(|l| l.sign()).collect();
        Self { cols, y }
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Parameters laid out as `[intercept, a_1, ..., a_k]`.
fn objective(x: &[&[f64]], y: &[f64], theta: &[f64]) -> f64 {
    let n = y.len();
    let mut loss = 0.0;
    for s in 0..n {
        let mut z = theta[0];
        for (j, col) in x.iter().enumerate() {
            z += theta[j + 1] * col[s];
        }
        loss += softplus(-y[s] * z);
    }
    let ridge: f64 = theta[1..].iter().map(|a| a * a).sum();
    loss / n as f64 + 0.5 * RIDGE * ridge
}

fn gradient_hessian(x: &[&[f64]], y: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = theta.len();
    let n = y.len();
    let mut g = vec![0.0; k];
    let mut h = vec![0.0; k * k];
    let mut xt = [0.0f64; 3];
    for s in 0..n {
        xt[0] = 1.0;
        let mut z = theta[0];
        for (j, col) in x.iter().enumerate() {
            xt[j + 1] = col[s];
            z += theta[j + 1] * col[s];
        }
        // d/dz softplus(-y z) = -y σ(-y z); second derivative σ(z) σ(-z).
        let r = -y[s] * sigmoid(-y[s] * z);
        let w = sigmoid(z) * sigmoid(-z);
        for a in 0..k {
            g[a] += r * xt[a];
            for b in 0..=a {
                h[a * k + b] += w * xt[a] * xt[b];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for a in 0..k {
        g[a] *= inv_n;
        for b in 0..=a {
            h[a * k + b] *= inv_n;
            h[b * k + a] = h[a * k + b];
        }
    }
    for a in 1..k {
        g[a] += RIDGE * theta[a];
        h[a * k + a] += RIDGE;
    }
    (g, h)
}

/// Solves `h · d = rhs` for a small symmetric positive-definite `h` by
/// Cholesky. Returns `None` when `h` is not numerically positive definite.
fn solve_spd(h: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = rhs.len();
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = h[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if sum.is_nan() || sum <= 0.0 {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut sum = rhs[i];
        for p in 0..i {
            sum -= l[i * k + p] * z[p];
        }
        z[i] = sum / l[i * k + i];
    }
    let mut d = vec![0.0; k];
    for i in (0..k).rev() {
        let mut sum = z[i];
        for p in i + 1..k {
            sum -= l[p * k + i] * d[p];
        }
        d[i] = sum / l[i * k + i];
    }
    Some(d)
}

struct FitOutcome {
    theta: Vec<f64>,
    converged: bool,
}

/// Damped Newton on the ridge-penalised mean logistic loss. Steps are halved
/// until the Armijo condition holds, so the objective never increases.
fn newton(x: &[&[f64]], y: &[f64], max_iters: usize, tol: f64) -> FitOutcome {
    let k = x.len() + 1;
    let mut theta = vec![0.0; k];
    let mut loss = objective(x, y, &theta);
    for _ in 0..max_iters {
        let (g, h) = gradient_hessian(x, y, &theta);
        if g.iter().all(|v| v.abs() < tol) {
            return FitOutcome { theta, converged: true };
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = solve_spd(&h, &neg_g).unwrap_or(neg_g);
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let cand_loss = objective(x, y, &cand);
            if cand_loss <= loss + 1e-4 * t * slope {
                theta = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (g, _) = gradient_hessian(x, y, &theta);
    let converged = g.iter().all(|v| v.abs() < tol);
    FitOutcome { theta, converged }
}

fn check_subset(indices: &[usize], n_features: usize) -> Result<(), WeakError> {
    let bad = indices.is_empty()
        || indices.len() > 2
        || indices.iter().any(|&j| j >= n_features)
        || (indices.len() == 2 && indices[0] == indices[1]);
    if bad {
        return Err(WeakError::InvalidFeatures { indices: indices.to_vec(), n_features });
    }
    Ok(())
}

fn fit_on_columns(
    cols: &Columns,
    labels: &[Label],
    indices: &[usize],
    max_iters: usize,
    tol: f64,
) -> Result<WeakClassifier, WeakError> {
    let x: Vec<&[f64]> = indices.iter().map(|&j| cols.cols[j].as_slice()).collect();
    let out = newton(&x, &cols.y, max_iters, tol);
    if !out.converged {
        log::warn!("logistic fit on features {indices:?} did not reach tolerance {tol}");
    }
    let logits: Vec<f64> = (0..cols.y.len())
        .map(|s| out.theta[0] + x.iter().enumerate().map(|(j, c)| out.theta[j + 1] * c[s]).sum::<f64>())
        .collect();
    let train_auc = auc(&logits, labels).map_err(|_| WeakError::SingleClass)?;
    Ok(WeakClassifier {
        feature_indices: indices.to_vec(),
        coefficients: out.theta[1..].to_vec(),
        intercept: out.theta[0],
        train_auc,
        converged: out.converged,
    })
}

fn require_both_classes(ds: &Dataset) -> Result<(), WeakError> {
    let (pos, neg) = ds.class_counts();
    if pos == 0 || neg == 0 {
        return Err(WeakError::SingleClass);
    }
    Ok(())
}

/// Fits one logistic weak classifier on the given one or two columns.
pub fn fit_logistic(
    ds: &Dataset,
    feature_indices: &[usize],
    max_iters: usize,
    tolerance: f64,
) -> Result<WeakClassifier, WeakError> {
    check_subset(feature_indices, ds.n_features())?;
    require_both_classes(ds)?;
    let cols = Columns::of(ds);
    fit_on_columns(&cols, ds.labels(), feature_indices, max_iters, tolerance)
}

/// Candidate subsets in enumeration order: singles, then pairs `(i, j)` with `i < j`.
pub fn candidate_subsets(n_features: usize, include_pairs: bool) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..n_features).map(|j| vec![j]).collect();
    if include_pairs {
        for i in 0..n_features {
            for j in i + 1..n_features {
                out.push(vec![i, j]);
            }
        }
    }
    out
}

/// Fits every candidate and keeps at most `max_classifiers` of them.
///
/// When truncating, candidates are ranked by train AUC (descending) with ties
/// broken by ascending feature indices; survivors are returned in candidate
/// order.
pub fn build_pool(ds: &Dataset, cfg: &PoolConfig) -> Result<Vec<WeakClassifier>, WeakError> {
    cfg.validate()?;
    require_both_classes(ds)?;
    let cols = Columns::of(ds);
    let candidates = candidate_subsets(ds.n_features(), cfg.include_pairs);
    let fitted: Vec<WeakClassifier> = candidates
        .par_iter()
        .map(|idx| fit_on_columns(&cols, ds.labels(), idx, cfg.logistic_max_iters, cfg.logistic_tolerance))
        .collect::<Result<_, _>>()?;
    if fitted.len() <= cfg.max_classifiers {
        return Ok(fitted);
    }
    let mut order: Vec<usize> = (0..fitted.len()).collect();
    order.sort_by(|&a, &b| {
        fitted[b]
            .train_auc
            .total_cmp(&fitted[a].train_auc)
            .then_with(|| fitted[a].feature_indices.cmp(&fitted[b].feature_indices))
    });
    let mut keep: Vec<usize> = order[..cfg.max_classifiers].to_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<WeakClassifier>> = fitted.into_iter().map(Some).collect();
    Ok(keep.into_iter().map(|i| slots[i].take().expect("index kept once")).collect())
}

/// `values[s][i] = pool[i].evaluate(row s)`; every entry lies in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    values: Array2<f64>,
}

impl PredictionMatrix {
    pub fn from_values(values: Array2<f64>) -> Result<Self, WeakError> {
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(WeakError::InvalidConfig("prediction entries must lie in [-1, 1]".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_classifiers(&self) -> usize {
        self.values.ncols()
    }

    /// Strong-classifier scores `H · w`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(weights).map(|(h, w)| h * w).sum())
            .collect()
    }
}

pub fn predict_matrix(pool: &[WeakClassifier], ds: &Dataset) -> Result<PredictionMatrix, WeakError> {
    if pool.is_empty() {
        return Err(WeakError::EmptyPool);
    }
    for wc in pool {
        check_subset(&wc.feature_indices, ds.n_features())?;
    }
    let columns: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|wc| ds.features().rows().into_iter().map(|row| wc.evaluate(row)).collect())
        .collect();
    let mut values = Array2::<f64>::zeros((ds.n_samples(), pool.len()));
    for (mut dst, src) in values.columns_mut().into_iter().zip(&columns) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = *s;
        }
    }
    Ok(PredictionMatrix { values })
}
