//! Quadratic objective `wᵀJw + Cᵀw` built from weak-classifier outputs.
//!
//! For a prediction matrix `H` (samples × classifiers), labels `y` and ridge
//! strength `λ`:
//!
//! ```text
//! J = HᵀH + λI        C = -2 Hᵀy        offset = Σ y_s² = S
//! ```
//!
//! so that `energy(w) + offset` equals the squared-error boosting loss
//! `Σ_s (Σ_i w_i h_i(x_s) − y_s)² + λ Σ_i w_i²` exactly.

use std::path::Path;

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::weak::PredictionMatrix;

/// Rows per partial Gram product during assembly. Fixed so results do not
/// depend on the thread count.
const ASSEMBLY_BLOCK: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum HamiltonianError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("sum constraint must be finite and positive, got {0}")]
    InvalidSumConstraint(f64),
    #[error("coupling matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("all coefficients are zero")]
    AllZero,
    #[error("dynamic range limit must be positive, got {0}")]
    InvalidRange(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed hamiltonian file at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    j: Array2<f64>,
    c: Array1<f64>,
    offset: f64,
    lambda: f64,
    sum_constraint: f64,
}

impl Hamiltonian {
    pub fn new(
        j: Array2<f64>,
        c: Array1<f64>,
        offset: f64,
        lambda: f64,
        sum_constraint: f64,
    ) -> Result<Self, HamiltonianError> {
        let n = c.len();
        if n == 0 || j.dim() != (n, n) {
            return Err(HamiltonianError::Dimension(format!(
                "J is {:?}, C has length {n}",
                j.dim()
            )));
        }
        if j.iter().chain(c.iter()).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(HamiltonianError::NonFinite);
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(HamiltonianError::InvalidLambda(lambda));
        }
        if !(sum_constraint.is_finite() && sum_constraint > 0.0) {
            return Err(HamiltonianError::InvalidSumConstraint(sum_constraint));
        }
        let scale = j.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..n {
            for b in 0..a {
                if (j[[a, b]] - j[[b, a]]).abs() > 1e-12 * scale {
                    return Err(HamiltonianError::NotSymmetric(a, b));
                }
            }
        }
        Ok(Self { j, c, offset, lambda, sum_constraint })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn j(&self) -> &Array2<f64> {
        &self.j
    }

    pub fn c(&self) -> &Array1<f64> {
        &self.c
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sum_constraint(&self) -> f64 {
        self.sum_constraint
    }

    pub fn with_sum_constraint(mut self, r: f64) -> Result<Self, HamiltonianError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(HamiltonianError::InvalidSumConstraint(r));
        }
        self.sum_constraint = r;
        Ok(self)
    }

    /// Writes `J·w` into `out`.
    pub fn couple(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let data = self.j.as_slice().expect("J is stored in standard layout");
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &data[i * n..(i + 1) * n];
            *o = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }

    /// Energy from a precomputed `J·w`.
    pub fn energy_with(&self, w: &[f64], jw: &[f64]) -> f64 {
        w.iter()
            .zip(jw)
            .zip(self.c.iter())
            .map(|((wi, jwi), ci)| wi * (jwi + ci))
            .sum()
    }

    /// `wᵀJw + Cᵀw` without the constant offset.
    pub fn energy(&self, w: &[f64]) -> Result<f64, HamiltonianError> {
        if w.len() != self.n() {
            return Err(HamiltonianError::Dimension(format!(
                "weights have length {}, hamiltonian has {}",
                w.len(),
                self.n()
            )));
        }
        let mut jw = vec![0.0; self.n()];
        self.couple(w, &mut jw);
        Ok(self.energy_with(w, &jw))
    }

    fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.j.iter().chain(self.c.iter()).copied()
    }

    pub fn to_file_format(&self) -> HamiltonianFile {
        let n = self.n();
        let mut j = Vec::with_capacity(n * (n + 1) / 2);
        for a in 0..n {
            for b in 0..=a {
                j.push(self.j[[a, b]]);
            }
        }
        HamiltonianFile {
            n,
            j,
            c: self.c.to_vec(),
            offset: self.offset,
            lambda: self.lambda,
            sum_constraint: self.sum_constraint,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file_format()).expect("plain numeric struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HamiltonianError> {
        let file: HamiltonianFile = serde_json::from_str(text).map_err(|e| HamiltonianError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_hamiltonian()
    }

    pub fn write(&self, path: &Path) -> Result<(), HamiltonianError> {
        std::fs::write(path, self.to_json()).map_err(|source| HamiltonianError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, HamiltonianError> {
        let text = std::fs::read_to_string(path).map_err(|source| HamiltonianError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// On-disk layout: `j` holds the lower triangle row by row
/// (`J[0][0], J[1][0], J[1][1], J[2][0], ...`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianFile {
    pub n: usize,
    pub j: Vec<f64>,
    pub c: Vec<f64>,
    pub offset: f64,
    pub lambda: f64,
    pub sum_constraint: f64,
}

impl HamiltonianFile {
    pub fn into_hamiltonian(self) -> Result<Hamiltonian, HamiltonianError> {
        let n = self.n;
        if self.j.len() != n * (n + 1) / 2 || self.c.len() != n {
            return Err(HamiltonianError::Dimension(format!(
                "n = {n} needs {} lower-triangle entries and {n} linear terms, got {} and {}",
                n * (n + 1) / 2,
                self.j.len(),
                self.c.len()
            )));
        }
        let mut j = Array2::zeros((n, n));
        let mut k = 0;
        for a in 0..n {
            for b in 0..=a {
                j[[a, b]] = self.j[k];
                j[[b, a]] = self.j[k];
                k += 1;
            }
        }
        Hamiltonian::new(j, Array1::from(self.c), self.offset, self.lambda, self.sum_constraint)
    }
}

fn check_labels(h: &PredictionMatrix, labels: &[Label]) -> Result<(), HamiltonianError> {
    if h.n_samples() != labels.len() {
        return Err(HamiltonianError::Dimension(format!(
            "{} prediction rows but {} labels",
            h.n_samples(),
            labels.len()
        )));
    }
    Ok(())
}

/// Builds `J = HᵀH + λI`, `C = −2Hᵀy`, `offset = S` with sum constraint 1.
///
/// Samples are processed in fixed-size blocks whose partial products are
/// computed in parallel and summed in block order.
pub fn assemble(h: &PredictionMatrix, labels: &[Label], lambda: f64) -> Result<Hamiltonian, HamiltonianError> {
    check_labels(h, labels)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(HamiltonianError::InvalidLambda(lambda));
    }
    let values = h.values();
    let (n_samples, n) = values.dim();
    if n == 0 {
        return Err(HamiltonianError::Dimension("no classifiers".into()));
    }
    let y: Array1<f64> = labels.iter().map(|l| l.sign()).collect();

    let blocks: Vec<(usize, usize)> = (0..n_samples)
        .step_by(ASSEMBLY_BLOCK)
        .map(|start| (start, (start + ASSEMBLY_BLOCK).min(n_samples)))
        .collect();
    let wave = rayon::current_num_threads().max(1);
    let mut gram = Array2::<f64>::zeros((n, n));
    let mut hy = Array1::<f64>::zeros(n);
    for group in blocks.chunks(wave) {
        let partials: Vec<(Array2<f64>, Array1<f64>)> = group
            .par_iter()
            .map(|&(a, b)| {
                let blk = values.slice(s![a..b, ..]);
                (blk.t().dot(&blk), blk.t().dot(&y.slice(s![a..b])))
            })
            .collect();
        for (g, v) in partials {
            gram += &g;
            hy += &v;
        }
    }
    for a in 0..n {
        for b in 0..a {
            gram[[b, a]] = gram[[a, b]];
        }
        gram[[a, a]] += lambda;
    }
    let offset = y.iter().map(|v| v * v).sum();
    Hamiltonian::new(gram, hy * -2.0, offset, lambda, 1.0)
}

pub fn energy(ham: &Hamiltonian, w: &[f64]) -> Result<f64, HamiltonianError> {
    ham.energy(w)
}

/// `Σ_s (Σ_i w_i h_i(x_s) − y_s)² + λ Σ_i w_i²`, evaluated directly.
pub fn boost_loss(h: &PredictionMatrix, labels: &[Label], lambda: f64, w: &[f64]) -> Result<f64, HamiltonianError> {
    check_labels(h, labels)?;
    if w.len() != h.n_classifiers() {
        return Err(HamiltonianError::Dimension(format!(
            "weights have length {}, pool has {}",
            w.len(),
            h.n_classifiers()
        )));
    }
    let fit: f64 = h
        .combine(w)
        .iter()
        .zip(labels)
        .map(|(score, l)| (score - l.sign()).powi(2))
        .sum();
    Ok(fit + lambda * w.iter().map(|v| v * v).sum::<f64>())
}

/// `10·log10(max|c| / min_nonzero|c|)` over every entry of `J` and `C`.
pub fn dynamic_range_db(ham: &Hamiltonian) -> Result<f64, HamiltonianError> {
    let (max, min) = ham
        .coefficients()
        .map(f64::abs)
        .filter(|&v| v > 0.0)
        .fold((0.0f64, f64::INFINITY), |(mx, mn), v| (mx.max(v), mn.min(v)));
    if max == 0.0 {
        return Err(HamiltonianError::AllZero);
    }
    Ok(10.0 * (max / min).log10())
}

/// Lifts every nonzero coefficient smaller in magnitude than
/// `max|c| / 10^(max_db/10)` up to that floor, keeping its sign. Models a
/// device that cannot resolve coefficients beyond a fixed dynamic range.
pub fn quantize_to_range(ham: &Hamiltonian, max_db: f64) -> Result<Hamiltonian, HamiltonianError> {
    if !(max_db.is_finite() && max_db > 0.0) {
        return Err(HamiltonianError::InvalidRange(max_db));
    }
    let max = ham.coefficients().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(ham.clone());
    }
    let mut floor = max / 10f64.powf(max_db / 10.0);
    // Rounding in the division may leave the range a few ulps above max_db.
    while 10.0 * (max / floor).log10() > max_db {
        floor *= 1.0 + f64::EPSILON;
    }
    let lift = |v: f64| {
        if v != 0.0 && v.abs() < floor {
            floor.copysign(v)
        } else {
            v
        }
    };
    let mut out = ham.clone();
    out.j.mapv_inplace(lift);
    out.c.mapv_inplace(lift);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm(values: Array2<f64>) -> PredictionMatrix {
        PredictionMatrix::from_values(values).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, s: usize, n: usize) -> (PredictionMatrix, Vec<Label>) {
        let h = Array2::from_shape_fn((s, n), |_| rng.random_range(-1.0..=1.0));
        let y = (0..s)
            .map(|_| if rng.random_bool(0.4) { Label::Positive } else { Label::Negative })
            .collect();
        (pm(h), y)
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(f64::EPSILON..1.0f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }

    #[test]
    fn single_sample_substitution() {
        let ham = assemble(&pm(array![[1.0, -1.0]]), &[Label::Positive], 0.0).unwrap();
        assert_eq!(ham.j(), &array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(ham.c(), &array![-2.0, 2.0]);
        assert_eq!(ham.offset(), 1.0);
        assert_eq!(ham.sum_constraint(), 1.0);
        assert_eq!(ham.energy(&[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(ham.energy(&[1.0, 0.0]).unwrap() + ham.offset(), 0.0);
    }

    #[test]
    fn zero_predictions_leave_ridge_only() {
        let ham = assemble(&pm(Array2::zeros((4, 3))), &[Label::Positive; 4], 3.0).unwrap();
        assert_eq!(ham.j(), &(Array2::<f64>::eye(3) * 3.0));
        assert!(ham.c().iter().all(|&v| v == 0.0));
        assert_eq!(ham.offset(), 4.0);
    }

    #[test]
    fn energy_of_zero_vector() {
        let ham = assemble(&pm(array![[0.5, -0.25]]), &[Label::Negative], 1.0).unwrap();
        assert_eq!(ham.energy(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(ham.energy(&[1.0]).is_err());
    }

    #[test]
    fn objective_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (h, y) = random_instance(&mut rng, 20, 5);
        let ham = assemble(&h, &y, 0.7).unwrap();
        for _ in 0..50 {
            let w = random_simplex(&mut rng, 5);
            let direct = boost_loss(&h, &y, 0.7, &w).unwrap();
            let via = ham.energy(&w).unwrap() + ham.offset();
            assert!((direct - via).abs() <= 1e-10 * direct.abs().max(1.0), "{direct} vs {via}");
        }
    }

    #[test]
    fn energy_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, y) = random_instance(&mut rng, 30, 7);
        let ham = assemble(&h, &y, 0.0).unwrap();
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut naive = 0.0;
        for i in 0..7 {
            for k in 0..7 {
                naive += ham.j()[[i, k]] * w[i] * w[k];
            }
            naive += ham.c()[i] * w[i];
        }
        let e = ham.energy(&w).unwrap();
        assert!((e - naive).abs() <= 1e-12 * naive.abs().max(1.0));
    }

    #[test]
    fn boost_loss_edge_cases() {
        let h = pm(array![[0.3], [-0.6], [0.9]]);
        let y = [Label::Positive, Label::Negative, Label::Positive];
        assert_eq!(boost_loss(&h, &y, 2.0, &[0.0]).unwrap(), 3.0);
        let exact = pm(array![[1.0], [-1.0], [1.0]]);
        assert_eq!(boost_loss(&exact, &y, 0.0, &[1.0]).unwrap(), 0.0);
        assert!(boost_loss(&h, &y[..2], 0.0, &[1.0]).is_err());
        assert!(boost_loss(&h, &y, 0.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn blocked_assembly_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (h, y) = random_instance(&mut rng, ASSEMBLY_BLOCK * 2 + 17, 4);
        let ham = assemble(&h, &y, 0.5).unwrap();
        let v = h.values();
        for a in 0..4 {
            for b in 0..4 {
                let mut naive: f64 = (0..v.nrows()).map(|s| v[[s, a]] * v[[s, b]]).sum();
                if a == b {
                    naive += 0.5;
                }
                assert!((ham.j()[[a, b]] - naive).abs() < 1e-9 * naive.abs().max(1.0));
            }
            let c: f64 = -2.0 * (0..v.nrows()).map(|s| y[s].sign() * v[[s, a]]).sum::<f64>();
            assert!((ham.c()[a] - c).abs() < 1e-9 * c.abs().max(1.0));
        }
        assert_eq!(ham.j(), &ham.j().t().to_owned());
    }

    #[test]
    fn assemble_dimension_errors() {
        assert!(assemble(&pm(Array2::zeros((3, 2))), &[Label::Positive; 2], 0.0).is_err());
        assert!(assemble(&pm(Array2::zeros((2, 2))), &[Label::Positive; 2], -1.0).is_err());
    }

    #[test]
    fn dynamic_range_values() {
        let ham = Hamiltonian::new(array![[1.0]], array![1.0], 0.0, 0.0, 1.0).unwrap();
        assert_eq!(dynamic_range_db(&ham).unwrap(), 0.0);
        let ham = Hamiltonian::new(array![[1000.0]], array![1.0], 0.0, 0.0, 1.0).unwrap();
        assert!((dynamic_range_db(&ham).unwrap() - 30.0).abs() < 1e-12);
        let zero = Hamiltonian::new(array![[0.0]], array![0.0], 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(dynamic_range_db(&zero), Err(HamiltonianError::AllZero)));
    }

    #[test]
    fn quantize_clamps_small_coefficients() {
        let ham = Hamiltonian::new(array![[1.0]], array![-1e-6], 0.0, 0.0, 1.0).unwrap();
        let q = quantize_to_range(&ham, 23.0).unwrap();
        assert!((q.c()[0] + 10f64.powf(-2.3)).abs() < 1e-15);
        assert_eq!(q.j()[[0, 0]], 1.0);
        assert!(dynamic_range_db(&q).unwrap() <= 23.0);
    }

    #[test]
    fn quantize_noop_within_range() {
        let ham = Hamiltonian::new(array![[4.0, 0.5], [0.5, 2.0]], array![-1.0, 0.0], 0.0, 0.0, 1.0).unwrap();
        assert_eq!(quantize_to_range(&ham, 23.0).unwrap(), ham);
        assert!(quantize_to_range(&ham, 0.0).is_err());
    }

    #[test]
    fn symmetry_enforced() {
        assert!(matches!(
            Hamiltonian::new(array![[1.0, 2.0], [0.0, 1.0]], array![0.0, 0.0], 0.0, 0.0, 1.0),
            Err(HamiltonianError::NotSymmetric(1, 0))
        ));
    }

    #[test]
    fn json_layout_and_errors() {
        let ham = Hamiltonian::new(array![[1.0, 2.0], [2.0, 3.0]], array![0.5, -0.5], 4.0, 0.1, 1.0).unwrap();
        let file = ham.to_file_format();
        assert_eq!(file.j, vec![1.0, 2.0, 3.0]);
        let back = Hamiltonian::from_json(&ham.to_json()).unwrap();
        assert_eq!(back, ham);
        let err = Hamiltonian::from_json("{\"n\": 2, \"j\": [1, 2").unwrap_err();
        assert!(matches!(err, HamiltonianError::Parse { line: 1, .. }));
        let err = Hamiltonian::from_json(r#"{"n":2,"j":[1,2],"c":[0,0],"offset":0,"lambda":0,"sum_constraint":1}"#)
            .unwrap_err();
        assert!(matches!(err, HamiltonianError::Dimension(_)));
    }
}
