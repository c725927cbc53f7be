//! Training pipeline, the strong classifier and its persistence.

pub mod metrics;

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balancing::{balance, BalanceConfig, BalanceError};
use crate::dataset::{
    apply_scaler, standardize, train_test_split, Dataset, DatasetError, Label, ScalerParams,
};
use crate::hamiltonian::{assemble, Hamiltonian, HamiltonianError};
use crate::solver::{solve, Backend, SolverConfig, SolverError};
use crate::weak::{build_pool, predict_matrix, PoolConfig, WeakClassifier, WeakError};

pub use metrics::{auc, balanced_accuracy, best_balanced_threshold, MetricError};

/// Current model file format.
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Weak(#[from] WeakError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("training data has a single class{0}")]
    SingleClass(&'static str),
    #[error("model expects {expected} features, data has {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model file does not match the schema: {0}")]
    Schema(String),
    #[error("unsupported model format version {found} (this build reads version {FORMAT_VERSION})")]
    Version { found: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    Zero,
    BalancedAccuracy,
}

impl std::str::FromStr for ThresholdRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "zero" => Ok(ThresholdRule::Zero),
            "balanced_accuracy" => Ok(ThresholdRule::BalancedAccuracy),
            other => Err(format!("unknown threshold rule `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub balance: Option<BalanceConfig>,
    pub pool: PoolConfig,
    pub lambda: f64,
    /// Total weight `R` that the solved weights sum to.
    pub sum_constraint: f64,
    pub solver: SolverConfig,
    pub threshold_rule: ThresholdRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            balance: None,
            pool: PoolConfig::default(),
            lambda: 1.0,
            sum_constraint: 1.0,
            solver: SolverConfig::default(),
            threshold_rule: ThresholdRule::Zero,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ModelError::InvalidConfig(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.sum_constraint.is_finite() && self.sum_constraint > 0.0) {
            return Err(ModelError::InvalidConfig("sum_constraint must be positive".into()));
        }
        if let Some(b) = &self.balance {
            if !(b.target_ratio > 0.0 && b.target_ratio <= 1.0) {
                return Err(ModelError::InvalidConfig("balance.target_ratio must lie in (0, 1]".into()));
            }
            if b.k_neighbors == 0 {
                return Err(ModelError::InvalidConfig("balance.k_neighbors must be at least 1".into()));
            }
        }
        self.pool.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    /// Sets every component seed from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(b) = self.balance.as_mut() {
            b.seed = seed;
        }
        self.pool.seed = seed;
        self.solver.seed = seed;
        self
    }
}

/// Wall-clock seconds per training phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub standardize: f64,
    pub balance: f64,
    pub build_pool: f64,
    pub predict_matrix: f64,
    pub assemble: f64,
    pub solve: f64,
    pub threshold: f64,
}

impl PhaseTimings {
    pub fn sum(&self) -> f64 {
        self.standardize + self.balance + self.build_pool + self.predict_matrix + self.assemble + self.solve + self.threshold
    }

    /// Everything except the solve.
    pub fn pipeline(&self) -> f64 {
        self.sum() - self.solve
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub seed: u64,
    pub backend: Backend,
    pub timings: PhaseTimings,
    pub total_seconds: f64,
    pub energy: f64,
    pub boost_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_train: usize,
    pub n_classifiers: usize,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub pool: Vec<WeakClassifier>,
    pub weights: Vec<f64>,
    pub scaler: ScalerParams,
    pub threshold: f64,
    pub lambda: f64,
    pub sum_constraint: f64,
    pub feature_names: Vec<String>,
    pub metadata: TrainMetadata,
}

/// Output of [`train_with_hamiltonian`]: the model plus the problem it solved.
pub struct TrainOutput {
    pub model: Model,
    pub hamiltonian: Hamiltonian,
}

pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<Model, ModelError> {
    Ok(train_with_hamiltonian(ds, cfg)?.model)
}

/// Runs standardize, balance, pool fitting, prediction matrix, assembly,
/// solve and threshold selection, timing each phase.
pub fn train_with_hamiltonian(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput, ModelError> {
    cfg.validate()?;
    let (pos, neg) = ds.class_counts();
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass(""));
    }
    let mut timings = PhaseTimings::default();
    let start = Instant::now();

    let mut t = Instant::now();
    let (scaled, scaler) = standardize(ds)?;
    timings.standardize = t.elapsed().as_secs_f64();

    t = Instant::now();
    let balanced = match &cfg.balance {
        Some(b) => balance(&scaled, b)?,
        None => scaled,
    };
    let (pos, neg) = balanced.class_counts();
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass(" after balancing"));
    }
    timings.balance = t.elapsed().as_secs_f64();

    t = Instant::now();
    let pool = build_pool(&balanced, &cfg.pool)?;
    timings.build_pool = t.elapsed().as_secs_f64();

    t = Instant::now();
    let h = predict_matrix(&pool, &balanced)?;
    timings.predict_matrix = t.elapsed().as_secs_f64();

    t = Instant::now();
    let ham = assemble(&h, balanced.labels(), cfg.lambda)?.with_sum_constraint(cfg.sum_constraint)?;
    timings.assemble = t.elapsed().as_secs_f64();

    t = Instant::now();
    let solution = solve(&ham, &cfg.solver)?;
    timings.solve = t.elapsed().as_secs_f64();

    t = Instant::now();
    let threshold = match cfg.threshold_rule {
        ThresholdRule::Zero => 0.0,
        ThresholdRule::BalancedAccuracy => {
            let scores = h.combine(&solution.weights);
            best_balanced_threshold(&scores, balanced.labels())?
        }
    };
    timings.threshold = t.elapsed().as_secs_f64();
    let total_seconds = start.elapsed().as_secs_f64();

    log::info!(
        "trained {} classifiers on {} rows: energy {:.6e}, {} iterations, {:.3}s",
        pool.len(),
        balanced.n_samples(),
        solution.energy,
        solution.iterations,
        total_seconds
    );

    let model = Model {
        metadata: TrainMetadata {
            seed: cfg.solver.seed,
            backend: cfg.solver.backend,
            timings,
            total_seconds,
            energy: solution.energy,
            boost_loss: solution.boost_loss,
            iterations: solution.iterations,
            converged: solution.converged,
            n_train: balanced.n_samples(),
            n_classifiers: pool.len(),
            config: cfg.clone(),
        },
        pool,
        weights: solution.weights,
        scaler,
        threshold,
        lambda: cfg.lambda,
        sum_constraint: cfg.sum_constraint,
        feature_names: ds.feature_names().to_vec(),
    };
    Ok(TrainOutput { model, hamiltonian: ham })
}

impl Model {
    pub fn n_features(&self) -> usize {
        self.scaler.n_features()
    }

    fn check_features(&self, ds: &Dataset) -> Result<(), ModelError> {
        if ds.n_features() != self.n_features() {
            return Err(ModelError::FeatureMismatch { expected: self.n_features(), found: ds.n_features() });
        }
        Ok(())
    }

    /// `Σ_i w_i·h_i(x)` on the scaled row.
    pub fn score_row(&self, raw: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.resize(raw.len(), 0.0);
        self.scaler.transform_row(ndarray::ArrayView1::from(raw), scratch);
        let row = ndarray::ArrayView1::from(&scratch[..]);
        self.pool
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(wc, &w)| w * wc.evaluate(row))
            .sum()
    }

    pub fn decision_scores(&self, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
        self.check_features(ds)?;
        let x = ds.features();
        let scores = (0..ds.n_samples())
            .into_par_iter()
            .map_init(Vec::new, |scratch, s| {
                let raw: Vec<f64> = x.row(s).to_vec();
                self.score_row(&raw, scratch)
            })
            .collect();
        Ok(scores)
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<Label>, ModelError> {
        Ok(self
            .decision_scores(ds)?
            .into_iter()
            .map(|s| if s > self.threshold { Label::Positive } else { Label::Negative })
            .collect())
    }

    /// AUC of the decision scores on `ds`.
    pub fn auc(&self, ds: &Dataset) -> Result<f64, ModelError> {
        Ok(auc(&self.decision_scores(ds)?, ds.labels())?)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Schema(m));
        if self.pool.is_empty() {
            return bad("pool is empty".into());
        }
        if self.pool.len() != self.weights.len() {
            return bad(format!("{} classifiers but {} weights", self.pool.len(), self.weights.len()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and nonnegative".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - self.sum_constraint).abs() > 1e-6 * self.sum_constraint.max(1.0) {
            return bad(format!("weights sum to {total}, expected {}", self.sum_constraint));
        }
        let nf = self.scaler.n_features();
        if self.scaler.std_devs.len() != nf || self.feature_names.len() != nf {
            return bad("scaler and feature names disagree on the feature count".into());
        }
        for wc in &self.pool {
            if wc.feature_indices.is_empty()
                || wc.feature_indices.len() != wc.coefficients.len()
                || wc.max_feature_index() >= nf
            {
                return bad(format!("classifier on features {:?} is malformed", wc.feature_indices));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = ModelFileRef { format_version: FORMAT_VERSION, model: self };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| ModelError::Schema("top level is not an object".into()))?;
        match obj.get("format_version") {
            None => return Err(ModelError::Schema("missing format_version".into())),
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => return Err(ModelError::Version { found: v.to_string() }),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| ModelError::Schema(e.to_string()))?;
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|source| ModelError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u64,
    #[serde(flatten)]
    model: &'a Model,
}

#[derive(Deserialize)]
struct ModelFile {
    #[allow(dead_code)]
    format_version: u64,
    #[serde(flatten)]
    model: Model,
}

pub fn save(m: &Model, path: &Path) -> Result<(), ModelError> {
    m.save(path)
}

pub fn load(path: &Path) -> Result<Model, ModelError> {
    Model::load(path)
}

pub fn decision_scores(m: &Model, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
    m.decision_scores(ds)
}

pub fn predict(m: &Model, ds: &Dataset) -> Result<Vec<Label>, ModelError> {
    m.predict(ds)
}

/// Validation AUC for one candidate `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub validation_auc: f64,
}

/// Picks `λ` by validation AUC on a stratified split of `ds`, then retrains
/// on all of `ds`. The earliest candidate wins ties.
pub fn tune_lambda(
    ds: &Dataset,
    cfg: &TrainConfig,
    lambdas: &[f64],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Model, Vec<LambdaScore>), ModelError> {
    if lambdas.is_empty() {
        return Err(ModelError::InvalidConfig("no lambda candidates".into()));
    }
    let (fit, val) = train_test_split(ds, 1.0 - validation_fraction, seed, true)?;
    let mut scores = Vec::with_capacity(lambdas.len());
    let mut best = (f64::NEG_INFINITY, lambdas[0]);
    for &lambda in lambdas {
        let c = TrainConfig { lambda, ..cfg.clone() };
        let m = train(&fit, &c)?;
        let a = m.auc(&val)?;
        log::debug!("lambda {lambda}: validation AUC {a:.5}");
        if a > best.0 {
            best = (a, lambda);
        }
        scores.push(LambdaScore { lambda, validation_auc: a });
    }
    let model = train(ds, &TrainConfig { lambda: best.1, ..cfg.clone() })?;
    Ok((model, scores))
}

/// Scores of raw feature rows, for callers without a [`Dataset`].
pub fn score_matrix(m: &Model, x: &Array2<f64>) -> Result<Vec<f64>, ModelError> {
    if x.ncols() != m.n_features() {
        return Err(ModelError::FeatureMismatch { expected: m.n_features(), found: x.ncols() });
    }
    let mut scratch = Vec::new();
    Ok(x.rows().into_iter().map(|r| m.score_row(&r.to_vec(), &mut scratch)).collect())
}

/// Scaler is fitted on training data only; this applies it to new data.
pub fn scale_like_training(m: &Model, ds: &Dataset) -> Result<Dataset, ModelError> {
    Ok(apply_scaler(ds, &m.scaler)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::solver::Backend;
    use ndarray::array;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            pool: PoolConfig { max_classifiers: 30, ..Default::default() },
            solver: SolverConfig { restarts: 2, max_iters: 2000, ..Default::default() },
            ..Default::default()
        }
    }

    fn data(sep: f64, flip: f64, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_samples: 400,
            n_features: 5,
            n_informative: 3,
            class_sep: sep,
            minority_fraction: 0.4,
            flip_fraction: flip,
            seed,
        })
        .unwrap()
    }

    fn toy_model(weights: Vec<f64>, pool: Vec<WeakClassifier>) -> Model {
        let nf = 2;
        Model {
            pool,
            weights,
            scaler: ScalerParams::identity(nf),
            threshold: 0.0,
            lambda: 1.0,
            sum_constraint: 1.0,
            feature_names: vec!["a".into(), "b".into()],
            metadata: TrainMetadata {
                seed: 0,
                backend: Backend::Dissipative,
                timings: PhaseTimings::default(),
                total_seconds: 0.0,
                energy: 0.0,
                boost_loss: 0.0,
                iterations: 0,
                converged: true,
                n_train: 0,
                n_classifiers: 0,
                config: TrainConfig::default(),
            },
        }
    }

    fn wc(features: Vec<usize>, coefficients: Vec<f64>, intercept: f64) -> WeakClassifier {
        WeakClassifier { feature_indices: features, coefficients, intercept, train_auc: 0.5, converged: true }
    }

    #[test]
    fn separable_training_auc_is_one() {
        let ds = data(10.0, 0.0, 3);
        let m = train(&ds, &quick_cfg()).unwrap();
        assert_eq!(m.auc(&ds).unwrap(), 1.0);
        let total: f64 = m.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_gives_centroid() {
        let ds = data(1.0, 0.05, 4);
        let cfg = TrainConfig { lambda: 1e9, ..quick_cfg() };
        let m = train(&ds, &cfg).unwrap();
        let uniform = 1.0 / m.weights.len() as f64;
        let dev = m.weights.iter().map(|w| (w - uniform).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = data(1.0, 0.05, 5);
        let a = train(&ds, &quick_cfg()).unwrap();
        let b = train(&ds, &quick_cfg()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.pool, b.pool);
    }

    #[test]
    fn phase_timings_cover_total() {
        let ds = data(1.0, 0.05, 6);
        let m = train(&ds, &quick_cfg()).unwrap();
        let t = &m.metadata;
        assert!((t.timings.sum() - t.total_seconds).abs() <= 0.05 * t.total_seconds);
    }

    #[test]
    fn single_classifier_scores_match_it() {
        let c = wc(vec![0], vec![1.3], -0.2);
        let other = wc(vec![1], vec![-0.7], 0.4);
        let m = toy_model(vec![1.0, 0.0], vec![c.clone(), other]);
        let ds = Dataset::from_parts(array![[0.5, 1.0], [-2.0, 0.3], [1.0, -1.0]], vec![Label::Positive, Label::Negative, Label::Negative]).unwrap();
        let scores = m.decision_scores(&ds).unwrap();
        for (s, r) in scores.iter().zip(ds.features().rows()) {
            assert_eq!(*s, c.evaluate(r));
        }
    }

    #[test]
    fn identical_classifiers_uniform_weights() {
        let c = wc(vec![0, 1], vec![0.6, -0.4], 0.1);
        let m = toy_model(vec![0.5, 0.5], vec![c.clone(), c.clone()]);
        let ds = Dataset::from_parts(array![[0.5, 1.0], [-2.0, 0.3]], vec![Label::Positive, Label::Negative]).unwrap();
        for (s, r) in m.decision_scores(&ds).unwrap().iter().zip(ds.features().rows()) {
            assert!((s - c.evaluate(r)).abs() < 1e-15);
        }
    }

    #[test]
    fn predict_is_strict() {
        let c = wc(vec![0], vec![1.0], 0.0);
        let mut m = toy_model(vec![1.0], vec![c]);
        let ds = Dataset::from_parts(array![[0.62, 0.0], [-0.41, 0.0]], vec![Label::Positive, Label::Negative]).unwrap();
        assert_eq!(m.predict(&ds).unwrap(), vec![Label::Positive, Label::Negative]);
        let scores = m.decision_scores(&ds).unwrap();
        m.threshold = scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(m.predict(&ds).unwrap(), vec![Label::Negative, Label::Negative]);
    }

    #[test]
    fn feature_mismatch_rejected() {
        let m = toy_model(vec![1.0], vec![wc(vec![0], vec![1.0], 0.0)]);
        let ds = Dataset::from_parts(array![[1.0, 2.0, 3.0]], vec![Label::Positive]).unwrap();
        assert!(matches!(m.decision_scores(&ds), Err(ModelError::FeatureMismatch { expected: 2, found: 3 })));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let ds = data(1.5, 0.0, 7);
        let m = train(&ds, &quick_cfg()).unwrap();
        let text = m.to_json();
        let back = Model::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.decision_scores(&ds).unwrap(), m.decision_scores(&ds).unwrap());

        let truncated = &text[..text.len() / 2];
        assert!(matches!(Model::from_json(truncated), Err(ModelError::Schema(_))));
        let future = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(Model::from_json(&future), Err(ModelError::Version { .. })));
        let missing = text.replacen("\"format_version\": 1,", "", 1);
        assert!(matches!(Model::from_json(&missing), Err(ModelError::Schema(_))));
    }

    #[test]
    fn balanced_threshold_rule_on_training_scores() {
        let ds = data(1.0, 0.05, 8);
        let cfg = TrainConfig { threshold_rule: ThresholdRule::BalancedAccuracy, ..quick_cfg() };
        let m = train(&ds, &cfg).unwrap();
        let scores = m.decision_scores(&ds).unwrap();
        let got = balanced_accuracy(&scores, ds.labels(), m.threshold).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut best = balanced_accuracy(&scores, ds.labels(), sorted[0] - 1.0).unwrap();
        for w in sorted.windows(2) {
            best = best.max(balanced_accuracy(&scores, ds.labels(), (w[0] + w[1]) / 2.0).unwrap());
        }
        assert!((got - best).abs() < 1e-12);
    }
}
