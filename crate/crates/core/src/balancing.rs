//! Training-set rebalancing: majority downsampling, SMOTE and ADASYN.
//!
//! All neighbor queries are exact brute-force Euclidean searches, so callers
//! should standardize features first. Synthetic rows are appended after the
//! original rows; originals are never modified.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetError, Label};
use ndarray::{Array2, ArrayView1};

#[derive(Debug, thiserror::Error)]
pub enum BalanceError {
    #[error("target ratio {target} must lie in (0, 1]")]
    InvalidRatio { target: f64 },
    #[error("target ratio {target} is below the current minority/majority ratio {current}")]
    RatioBelowCurrent { target: f64, current: f64 },
    #[error("dataset is missing a class")]
    EmptyClass,
    #[error("k_neighbors = {k} needs more than {k} minority samples, found {minority}")]
    TooFewMinority { minority: usize, k: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Downsample,
    Smote,
    Adasyn,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Downsample => "downsample",
            Strategy::Smote => "smote",
            Strategy::Adasyn => "adasyn",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "downsample" => Ok(Strategy::Downsample),
            "smote" => Ok(Strategy::Smote),
            "adasyn" => Ok(Strategy::Adasyn),
            other => Err(format!("unknown balancing strategy `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub strategy: Strategy,
    pub target_ratio: f64,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Smote,
            target_ratio: 1.0,
            k_neighbors: 5,
            seed: 0,
        }
    }
}

/// Runs the configured strategy.
pub fn balance(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    match cfg.strategy {
        Strategy::Downsample => downsample_majority(ds, cfg),
        Strategy::Smote => smote(ds, cfg),
        Strategy::Adasyn => adasyn(ds, cfg),
    }
}

struct ClassSplit {
    minority_label: Label,
    minority: Vec<usize>,
    majority: Vec<usize>,
}

impl ClassSplit {
    fn of(ds: &Dataset) -> Result<Self, BalanceError> {
        let pos = ds.indices_of(Label::Positive);
        let neg = ds.indices_of(Label::Negative);
        if pos.is_empty() || neg.is_empty() {
            return Err(BalanceError::EmptyClass);
        }
        Ok(if pos.len() <= neg.len() {
            ClassSplit { minority_label: Label::Positive, minority: pos, majority: neg }
        } else {
            ClassSplit { minority_label: Label::Negative, minority: neg, majority: pos }
        })
    }

    fn ratio(&self) -> f64 {
        self.minority.len() as f64 / self.majority.len() as f64
    }
}

fn check_ratio(target: f64) -> Result<(), BalanceError> {
    if target > 0.0 && target <= 1.0 {
        Ok(())
    } else {
        Err(BalanceError::InvalidRatio { target })
    }
}

/// Number of synthetic minority rows needed to reach `target` against a
/// fixed majority: `ceil(target * majority) - minority`, floored at zero.
pub fn synthetic_count(minority: usize, majority: usize, target: f64) -> usize {
    // Guard the ceiling against products like 0.1 * 1000 landing a hair above an integer.
    let wanted = (target * majority as f64 - 1e-9).ceil().max(0.0) as usize;
    wanted.saturating_sub(minority)
}

/// Keeps every minority row and a seeded random subset of
/// `round(minority / target)` majority rows. Row order is preserved.
pub fn downsample_majority(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    check_ratio(cfg.target_ratio)?;
    let split = ClassSplit::of(ds)?;
    let current = split.ratio();
    if cfg.target_ratio < current {
        return Err(BalanceError::RatioBelowCurrent { target: cfg.target_ratio, current });
    }
    let keep = ((split.minority.len() as f64 / cfg.target_ratio).round() as usize)
        .clamp(1, split.majority.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<usize> = index::sample(&mut rng, split.majority.len(), keep)
        .into_iter()
        .map(|i| split.majority[i])
        .chain(split.minority.iter().copied())
        .collect();
    rows.sort_unstable();
    Ok(ds.select_rows(&rows)?)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `candidates`) of the `k` nearest candidates to `query`,
/// excluding the row `query` itself. Ties break on the lower row index.
fn k_nearest(ds: &Dataset, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let q = ds.row(query);
    let mut scored: Vec<(f64, usize, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, &row)| row != query)
        .map(|(slot, &row)| (sq_dist(q, ds.row(row)), row, slot))
        .collect();
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, _, slot)| slot).collect()
}

/// k nearest minority neighbours for every minority row, as minority slots.
fn minority_neighbours(ds: &Dataset, minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority.iter().map(|&row| k_nearest(ds, row, minority, k)).collect()
}

fn check_k(split: &ClassSplit, k: usize) -> Result<(), BalanceError> {
    if k == 0 || split.minority.len() <= k {
        return Err(BalanceError::TooFewMinority { minority: split.minority.len(), k });
    }
    Ok(())
}

/// Appends synthetic rows `x + u * (nn - x)` built from `(source slot, count)`
/// budgets.
fn append_synthetic(
    ds: &Dataset,
    split: &ClassSplit,
    neighbours: &[Vec<usize>],
    budgets: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Dataset, BalanceError> {
    let total: usize = budgets.iter().sum();
    let f = ds.n_features();
    let n = ds.n_samples();
    let mut features = Array2::<f64>::zeros((n + total, f));
    features.slice_mut(ndarray::s![..n, ..]).assign(ds.features());
    let mut labels = ds.labels().to_vec();
    let mut out = n;
    for (slot, &count) in budgets.iter().enumerate() {
        let x = ds.row(split.minority[slot]);
        for _ in 0..count {
            let pick = neighbours[slot][rng.random_range(0..neighbours[slot].len())];
            let nn = ds.row(split.minority[pick]);
            let u: f64 = rng.random_range(0.0..=1.0);
            let mut row = features.row_mut(out);
            for j in 0..f {
                row[j] = x[j] + u * (nn[j] - x[j]);
            }
            labels.push(split.minority_label);
            out += 1;
        }
    }
    Ok(Dataset::new(features, labels, ds.feature_names().to_vec())?)
}

/// SMOTE: each synthetic row interpolates a uniformly drawn minority row
/// towards one of its `k` nearest minority neighbours.
pub fn smote(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    check_ratio(cfg.target_ratio)?;
    let split = ClassSplit::of(ds)?;
    let needed = synthetic_count(split.minority.len(), split.majority.len(), cfg.target_ratio);
    if needed == 0 {
        return Ok(ds.clone());
    }
    check_k(&split, cfg.k_neighbors)?;
    let neighbours = minority_neighbours(ds, &split.minority, cfg.k_neighbors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut budgets = vec![0usize; split.minority.len()];
    for _ in 0..needed {
        budgets[rng.random_range(0..split.minority.len())] += 1;
    }
    append_synthetic(ds, &split, &neighbours, &budgets, &mut rng)
}

/// Splits `total` proportionally to `weights` using largest-remainder
/// rounding, so the result sums to `total` exactly. Ties in the remainder go
/// to the lower index. All-zero weights fall back to equal shares.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / n as f64; n]
    };
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Hardness ratio `r_i` for each minority row: the fraction of majority rows
/// among its `k` nearest neighbours in the whole dataset.
pub fn adasyn_hardness(ds: &Dataset, k: usize) -> Result<Vec<f64>, BalanceError> {
    let split = ClassSplit::of(ds)?;
    Ok(hardness(ds, &split, k))
}

fn hardness(ds: &Dataset, split: &ClassSplit, k: usize) -> Vec<f64> {
    let all: Vec<usize> = (0..ds.n_samples()).collect();
    let labels = ds.labels();
    split
        .minority
        .iter()
        .map(|&row| {
            let nn = k_nearest(ds, row, &all, k);
            let majority = nn.iter().filter(|&&i| labels[i] != split.minority_label).count();
            majority as f64 / k as f64
        })
        .collect()
}

/// ADASYN: synthetic budget per minority row proportional to its hardness
/// ratio, rounded by largest remainder; interpolation as in SMOTE.
pub fn adasyn(ds: &Dataset, cfg: &BalanceConfig) -> Result<Dataset, BalanceError> {
    check_ratio(cfg.target_ratio)?;
    let split = ClassSplit::of(ds)?;
    let needed = synthetic_count(split.minority.len(), split.majority.len(), cfg.target_ratio);
    if needed == 0 {
        return Ok(ds.clone());
    }
    check_k(&split, cfg.k_neighbors)?;
    let budgets = largest_remainder(&hardness(ds, &split, cfg.k_neighbors), needed);
    let neighbours = minority_neighbours(ds, &split.minority, cfg.k_neighbors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    append_synthetic(ds, &split, &neighbours, &budgets, &mut rng)
}
