//! Timed sweeps over the training pipeline and their reports.
//!
//! Each axis value runs `repeats` trials one after another. A trial generates
//! a synthetic dataset, splits it, trains, and scores the held-out part.
//!
//! CSV reports start with `# key=value` environment lines followed by a
//! header in the fixed order of [`CSV_COLUMNS`]. Floats are written in
//! shortest round-trip form, so parsing an emitted report gives back an equal
//! value. Empty cells stand for missing statistics.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::balancing::{BalanceConfig, Strategy};
use crate::dataset::{generate_synthetic, train_test_split, SyntheticSpec};
use crate::model::{train, ModelError, PhaseTimings, TrainConfig};

pub const REPORT_FORMAT_VERSION: u64 = 1;

/// Largest training-row count a sweep accepts.
pub const MAX_TRAIN_COUNT: f64 = 500_000.0;
/// Largest classifier count a sweep accepts.
pub const MAX_CLASSIFIERS: f64 = 1_000.0;

/// Column order of CSV reports.
pub const CSV_COLUMNS: [&str; 24] = [
    "axis_value",
    "strategy",
    "trials",
    "mean_runtime_s",
    "std_runtime_s",
    "runtime_error_bar_s",
    "mean_auc",
    "std_auc",
    "auc_error_bar",
    "solver_fraction",
    "pipeline_fraction",
    "standardize_s",
    "balance_s",
    "build_pool_s",
    "predict_matrix_s",
    "assemble_s",
    "solve_s",
    "threshold_s",
    "mean_iterations",
    "seconds_per_iteration",
    "mean_energy",
    "mean_classifiers",
    "mean_train_rows",
    "errors",
];

/// Column order of the per-strategy accuracy table.
pub const ACCURACY_COLUMNS: [&str; 4] = ["strategy", "ratio", "mean_auc", "std_auc"];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("scaling fit needs at least 3 rows with positive values, got {0}")]
    TooFewPoints(usize),
    #[error("scaling fit needs at least two distinct axis values")]
    DegenerateAxis,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed report: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Training rows after the split.
    TrainCount,
    /// Features of the generated data.
    FeatureCount,
    /// Minority-to-majority ratio targeted by the balancing strategy.
    ClassRatio,
    /// Cap on the weak-classifier pool, i.e. the Hamiltonian dimension `N`.
    HamiltonianSize,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::TrainCount => "train_count",
            Axis::FeatureCount => "feature_count",
            Axis::ClassRatio => "class_ratio",
            Axis::HamiltonianSize => "hamiltonian_size",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "train_count" => Ok(Axis::TrainCount),
            "feature_count" => Ok(Axis::FeatureCount),
            "class_ratio" => Ok(Axis::ClassRatio),
            "hamiltonian_size" => Ok(Axis::HamiltonianSize),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub repeats: usize,
    pub train: TrainConfig,
    pub data: SyntheticSpec,
    /// Fraction of generated rows held out for AUC.
    pub test_fraction: f64,
    /// Strategy used on the class-ratio axis.
    pub strategy: Strategy,
    pub seed: u64,
    /// When false every trial reuses `seed`, which makes AUC spread zero.
    pub vary_seed: bool,
    /// Worker threads inside a trial; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: Axis::TrainCount,
            values: vec![1000.0, 5000.0, 20000.0],
            repeats: 3,
            train: TrainConfig::default(),
            data: SyntheticSpec::default(),
            test_fraction: 0.25,
            strategy: Strategy::Smote,
            seed: 0,
            vary_seed: true,
            threads: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::InvalidSpec(m));
        if self.values.is_empty() {
            return fail("no axis values".into());
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return fail("axis values must be positive".into());
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return fail("axis values must be strictly increasing".into());
        }
        if self.repeats < 3 {
            return fail(format!("repeats must be at least 3, got {}", self.repeats));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail("test_fraction must lie in (0, 1)".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        let max = *self.values.last().expect("non-empty");
        let integral = self.values.iter().all(|v| v.fract() == 0.0);
        match self.axis {
            Axis::TrainCount => {
                if max > MAX_TRAIN_COUNT || !integral {
                    return fail(format!("train_count values must be integers up to {MAX_TRAIN_COUNT}"));
                }
            }
            Axis::HamiltonianSize => {
                if max > MAX_CLASSIFIERS || !integral {
                    return fail(format!("hamiltonian_size values must be integers up to {MAX_CLASSIFIERS}"));
                }
            }
            Axis::FeatureCount => {
                if !integral {
                    return fail("feature_count values must be integers".into());
                }
            }
            Axis::ClassRatio => {
                if max > 1.0 {
                    return fail("class_ratio values must lie in (0, 1]".into());
                }
            }
        }
        self.train.validate().map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        if self.vary_seed {
            self.seed.wrapping_add(trial as u64)
        } else {
            self.seed
        }
    }

    /// Dataset spec and training config for one trial at `value`.
    fn trial_setup(&self, value: f64, seed: u64) -> (SyntheticSpec, TrainConfig) {
        let mut data = SyntheticSpec { seed, ..self.data.clone() };
        let mut cfg = self.train.clone().with_seed(seed);
        match self.axis {
            Axis::TrainCount => {
                data.n_samples = (value / (1.0 - self.test_fraction)).round() as usize;
            }
            Axis::FeatureCount => {
                data.n_features = value as usize;
                data.n_informative = data.n_informative.min(data.n_features);
            }
            Axis::ClassRatio => {
                // Below the native ratio there is nothing to oversample.
                let native = data.minority_count() as f64 / (data.n_samples - data.minority_count()).max(1) as f64;
                cfg.balance = (value > native).then(|| BalanceConfig {
                    strategy: self.strategy,
                    target_ratio: value,
                    seed,
                    ..cfg.balance.clone().unwrap_or_default()
                });
            }
            Axis::HamiltonianSize => {
                let n = value as usize;
                cfg.pool.max_classifiers = n;
                let mut f = data.n_features;
                while candidate_count(f, cfg.pool.include_pairs) < n {
                    f += 1;
                }
                data.n_features = f;
            }
        }
        (data, cfg)
    }

    fn strategy_label(&self) -> String {
        match (self.axis, &self.train.balance) {
            (Axis::ClassRatio, _) => self.strategy.name().to_string(),
            (_, Some(b)) => b.strategy.name().to_string(),
            (_, None) => "none".to_string(),
        }
    }
}

fn candidate_count(f: usize, pairs: bool) -> usize {
    if pairs {
        f + f * f.saturating_sub(1) / 2
    } else {
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub cores: usize,
    pub threads: usize,
    pub timestamp_unix: u64,
    pub crate_version: String,
}

impl Environment {
    pub fn capture(threads: Option<usize>) -> Self {
        Self {
            cores: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            threads: threads.unwrap_or_else(rayon::current_num_threads),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub axis_value: f64,
    pub strategy: String,
    /// Trials that completed.
    pub trials: usize,
    pub mean_runtime_s: Option<f64>,
    pub std_runtime_s: Option<f64>,
    pub runtime_error_bar_s: Option<f64>,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub auc_error_bar: Option<f64>,
    pub solver_fraction: Option<f64>,
    pub pipeline_fraction: Option<f64>,
    /// Mean seconds per phase.
    pub phases: PhaseTimings,
    pub mean_iterations: Option<f64>,
    pub seconds_per_iteration: Option<f64>,
    pub mean_energy: Option<f64>,
    pub mean_classifiers: Option<f64>,
    pub mean_train_rows: Option<f64>,
    /// Messages of failed trials.
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u64,
    pub axis: Axis,
    pub environment: Environment,
    pub rows: Vec<ReportRow>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

struct Trial {
    runtime: f64,
    auc: f64,
    timings: PhaseTimings,
    iterations: usize,
    energy: f64,
    classifiers: usize,
    train_rows: usize,
}

fn run_trial(spec: &SweepSpec, value: f64, seed: u64) -> Result<Trial, ModelError> {
    let (data, cfg) = spec.trial_setup(value, seed);
    let ds = generate_synthetic(&data)?;
    let (train_ds, test_ds) = train_test_split(&ds, 1.0 - spec.test_fraction, seed, true)?;
    let started = Instant::now();
    let model = train(&train_ds, &cfg)?;
    let runtime = started.elapsed().as_secs_f64();
    let auc = model.auc(&test_ds)?;
    let md = model.metadata;
    Ok(Trial {
        runtime,
        auc,
        timings: md.timings,
        iterations: md.iterations,
        energy: md.energy,
        classifiers: md.n_classifiers,
        train_rows: md.n_train,
    })
}

fn summarize(value: f64, strategy: String, trials: &[Trial], errors: Vec<String>) -> ReportRow {
    let col = |f: &dyn Fn(&Trial) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let mean = |f: &dyn Fn(&Trial) -> f64| mean_std(&col(f)).map(|m| m.0);
    let runtime = mean_std(&col(&|t| t.runtime));
    let auc = mean_std(&col(&|t| t.auc));
    let phase = |f: &dyn Fn(&PhaseTimings) -> f64| mean(&|t| f(&t.timings)).unwrap_or(0.0);
    let phases = PhaseTimings {
        standardize: phase(&|p| p.standardize),
        balance: phase(&|p| p.balance),
        build_pool: phase(&|p| p.build_pool),
        predict_matrix: phase(&|p| p.predict_matrix),
        assemble: phase(&|p| p.assemble),
        solve: phase(&|p| p.solve),
        threshold: phase(&|p| p.threshold),
    };
    let phase_total = phases.sum();
    let (solver_fraction, pipeline_fraction) = if trials.is_empty() || phase_total <= 0.0 {
        (None, None)
    } else {
        (Some(phases.solve / phase_total), Some(phases.pipeline() / phase_total))
    };
    let per_iteration = {
        let v: Vec<f64> = trials
            .iter()
            .filter(|t| t.iterations > 0)
            .map(|t| t.timings.solve / t.iterations as f64)
            .collect();
        mean_std(&v).map(|m| m.0)
    };
    ReportRow {
        axis_value: value,
        strategy,
        trials: trials.len(),
        mean_runtime_s: runtime.map(|m| m.0),
        std_runtime_s: runtime.map(|m| m.1),
        runtime_error_bar_s: runtime.map(|m| 2.0 * m.1),
        mean_auc: auc.map(|m| m.0),
        std_auc: auc.map(|m| m.1),
        auc_error_bar: auc.map(|m| 2.0 * m.1),
        solver_fraction,
        pipeline_fraction,
        phases,
        mean_iterations: mean(&|t| t.iterations as f64),
        seconds_per_iteration: per_iteration,
        mean_energy: mean(&|t| t.energy),
        mean_classifiers: mean(&|t| t.classifiers as f64),
        mean_train_rows: mean(&|t| t.train_rows as f64),
        errors,
    }
}

/// Runs every trial of the sweep in sequence. Failed trials are recorded in
/// their row's `errors` and do not stop the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Report, BenchError> {
    spec.validate()?;
    let pool = match spec.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchError::InvalidSpec(e.to_string()))?,
        ),
        None => None,
    };
    let environment = Environment::capture(spec.threads);
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut trials = Vec::with_capacity(spec.repeats);
        let mut errors = Vec::new();
        for t in 0..spec.repeats {
            let seed = spec.trial_seed(t);
            let result = match &pool {
                Some(p) => p.install(|| run_trial(spec, value, seed)),
                None => run_trial(spec, value, seed),
            };
            match result {
                Ok(trial) => {
                    log::info!("{}={value} trial {t}: {:.3}s auc {:.4}", spec.axis.name(), trial.runtime, trial.auc);
                    trials.push(trial);
                }
                Err(e) => {
                    log::warn!("{}={value} trial {t} failed: {e}", spec.axis.name());
                    errors.push(format!("trial {t}: {e}"));
                }
            }
        }
        rows.push(summarize(value, spec.strategy_label(), &trials, errors));
    }
    Ok(Report { format_version: REPORT_FORMAT_VERSION, axis: spec.axis, environment, rows })
}

/// Per-row quantity regressed against the axis value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Runtime,
    Assemble,
    Solve,
    PerIteration,
}

impl Metric {
    fn of(self, row: &ReportRow) -> Option<f64> {
        match self {
            Metric::Runtime => row.mean_runtime_s,
            Metric::Assemble => row.mean_runtime_s.map(|_| row.phases.assemble),
            Metric::Solve => row.mean_runtime_s.map(|_| row.phases.solve),
            Metric::PerIteration => row.seconds_per_iteration,
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<f64, BenchError> {
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if points.len() < 3 {
        return Err(BenchError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * n {
        return Err(BenchError::DegenerateAxis);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Scaling exponent of mean runtime against the axis value.
pub fn fit_scaling_exponent(report: &Report) -> Result<f64, BenchError> {
    fit_scaling_exponent_of(report, Metric::Runtime)
}

pub fn fit_scaling_exponent_of(report: &Report, metric: Metric) -> Result<f64, BenchError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        report.rows.iter().filter_map(|r| metric.of(r).map(|y| (r.axis_value, y))).unzip();
    fit_power_law(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.display().to_string(), source }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(report: &Report) -> String {
    let mut out = Vec::new();
    let env = &report.environment;
    writeln!(out, "# format_version={}", report.format_version).unwrap();
    writeln!(out, "# axis={}", report.axis.name()).unwrap();
    writeln!(out, "# cores={}", env.cores).unwrap();
    writeln!(out, "# threads={}", env.threads).unwrap();
    writeln!(out, "# timestamp_unix={}", env.timestamp_unix).unwrap();
    writeln!(out, "# crate_version={}", env.crate_version).unwrap();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(CSV_COLUMNS).unwrap();
        for r in &report.rows {
            let p = &r.phases;
            w.write_record([
                r.axis_value.to_string(),
                r.strategy.clone(),
                r.trials.to_string(),
                opt(r.mean_runtime_s),
                opt(r.std_runtime_s),
                opt(r.runtime_error_bar_s),
                opt(r.mean_auc),
                opt(r.std_auc),
                opt(r.auc_error_bar),
                opt(r.solver_fraction),
                opt(r.pipeline_fraction),
                p.standardize.to_string(),
                p.balance.to_string(),
                p.build_pool.to_string(),
                p.predict_matrix.to_string(),
                p.assemble.to_string(),
                p.solve.to_string(),
                p.threshold.to_string(),
                opt(r.mean_iterations),
                opt(r.seconds_per_iteration),
                opt(r.mean_energy),
                opt(r.mean_classifiers),
                opt(r.mean_train_rows),
                serde_json::to_string(&r.errors).expect("strings serialise"),
            ])
            .unwrap();
        }
        w.flush().unwrap();
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

pub fn from_csv(text: &str) -> Result<Report, BenchError> {
    let perr = |m: String| BenchError::Parse(m);
    let mut meta = std::collections::HashMap::new();
    let mut body = String::new();
    for line in text.as_bytes().lines() {
        let line = line.map_err(|e| perr(e.to_string()))?;
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once('=').ok_or_else(|| perr(format!("bad header line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| perr(format!("missing `{k}` header")));
    let num = |k: &str| -> Result<u64, BenchError> { get(k)?.parse().map_err(|_| perr(format!("bad `{k}` header"))) };
    let format_version = num("format_version")?;
    if format_version != REPORT_FORMAT_VERSION {
        return Err(perr(format!("unsupported format version {format_version}")));
    }
    let axis: Axis = get("axis")?.parse().map_err(perr)?;
    let environment = Environment {
        cores: num("cores")? as usize,
        threads: num("threads")? as usize,
        timestamp_unix: num("timestamp_unix")?,
        crate_version: get("crate_version")?,
    };

    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| perr(e.to_string()))?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(perr("header does not match the documented column order".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        let f = |i: usize| -> Result<f64, BenchError> {
            rec[i].parse().map_err(|_| perr(format!("bad number `{}` in column {}", &rec[i], CSV_COLUMNS[i])))
        };
        let o = |i: usize| -> Result<Option<f64>, BenchError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        rows.push(ReportRow {
            axis_value: f(0)?,
            strategy: rec[1].to_string(),
            trials: rec[2].parse().map_err(|_| perr(format!("bad trial count `{}`", &rec[2])))?,
            mean_runtime_s: o(3)?,
            std_runtime_s: o(4)?,
            runtime_error_bar_s: o(5)?,
            mean_auc: o(6)?,
            std_auc: o(7)?,
            auc_error_bar: o(8)?,
            solver_fraction: o(9)?,
            pipeline_fraction: o(10)?,
            phases: PhaseTimings {
                standardize: f(11)?,
                balance: f(12)?,
                build_pool: f(13)?,
                predict_matrix: f(14)?,
                assemble: f(15)?,
                solve: f(16)?,
                threshold: f(17)?,
            },
            mean_iterations: o(18)?,
            seconds_per_iteration: o(19)?,
            mean_energy: o(20)?,
            mean_classifiers: o(21)?,
            mean_train_rows: o(22)?,
            errors: serde_json::from_str(&rec[23]).map_err(|e| perr(e.to_string()))?,
        });
    }
    Ok(Report { format_version, axis, environment, rows })
}

pub fn to_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serialises")
}

pub fn from_json(text: &str) -> Result<Report, BenchError> {
    let report: Report = serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(BenchError::Parse(format!("unsupported format version {}", report.format_version)));
    }
    Ok(report)
}

pub fn emit(report: &Report, format: Format, path: &Path) -> Result<(), BenchError> {
    let text = match format {
        Format::Csv => to_csv(report),
        Format::Json => to_json(report),
    };
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load(path: &Path, format: Format) -> Result<Report, BenchError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        Format::Csv => from_csv(&text),
        Format::Json => from_json(&text),
    }
}

/// One line per (strategy, ratio) with mean and spread of held-out AUC.
pub fn accuracy_table(reports: &[Report]) -> String {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(ACCURACY_COLUMNS).unwrap();
        for r in reports {
            for row in &r.rows {
                w.write_record([row.strategy.clone(), row.axis_value.to_string(), opt(row.mean_auc), opt(row.std_auc)])
                    .unwrap();
            }
        }
        w.flush().unwrap();
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

pub fn emit_accuracy_table(reports: &[Report], path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, accuracy_table(reports)).map_err(io_err(path))
}
