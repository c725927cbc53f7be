//! Command-line front end. [`dispatch`] parses arguments, runs one
//! subcommand and maps the outcome to an exit code:
//!
//! * `0` on success (including `--help` and `--version`),
//! * `1` on usage errors, with usage text on stderr,
//! * `2` on runtime failures, with a diagnostic on stderr.
//!
//! Results go to `--out` files. Only `inspect` and `--help` write to stdout.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use cvqboost::balancing::Strategy;
use cvqboost::bench::{self, Axis, Format, SweepSpec};
use cvqboost::dataset::{self, generate_synthetic, load_csv, train_test_split, Dataset, Label, SyntheticSpec};
use cvqboost::hamiltonian::Hamiltonian;
use cvqboost::model::{self, balanced_accuracy, tune_lambda, train_with_hamiltonian, Model, ThresholdRule, TrainConfig};
use cvqboost::solver::{self, Backend, SolverConfig};

/// Environment variable capping worker threads (0 or unset means automatic).
pub const THREADS_ENV: &str = "CVQBOOST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cvqboost", version, about = "Boosting with continuous simplex-constrained weights")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Increase log detail on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Output path for the subcommand's result.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON training config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-class dataset as CSV.
    Generate(GenerateArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Score a CSV file with a saved model.
    Predict(PredictArgs),
    /// Compute a metric of a saved model on labeled data.
    Evaluate(EvaluateArgs),
    /// Minimise a Hamiltonian file.
    Solve(SolveArgs),
    /// Run a timed sweep and write a report.
    Bench(BenchArgs),
    /// Print a model's classifiers, heaviest first.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 10)]
    pub informative: usize,
    #[arg(long, default_value_t = 1.0)]
    pub class_sep: f64,
    /// Fraction of rows in the positive (minority) class.
    #[arg(long, default_value_t = 0.5)]
    pub minority: f64,
    /// Fraction of labels flipped after generation.
    #[arg(long, default_value_t = 0.0)]
    pub flip: f64,
}

impl SyntheticArgs {
    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: self.samples,
            n_features: self.features,
            n_informative: self.informative,
            class_sep: self.class_sep,
            minority_fraction: self.minority,
            flip_fraction: self.flip,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: SyntheticArgs,
    #[arg(long, default_value = "label")]
    pub label_column: String,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Name of the label column.
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Label value that marks the positive class.
    #[arg(long, default_value = "1")]
    pub positive_label: String,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Clamp coefficients to this dynamic range (dB) before solving.
    #[arg(long)]
    pub emulate_range_db: Option<f64>,
    /// Grid resolution of the brute-force backend.
    #[arg(long)]
    pub grid_resolution: Option<usize>,
}

impl SolverArgs {
    fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.tolerance {
            cfg.tolerance = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.emulate_range_db {
            cfg.emulate_range_db = Some(v);
        }
        if let Some(v) = self.grid_resolution {
            cfg.grid_resolution = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Balancing strategy; `none` trains on the data as given.
    #[arg(long, value_enum)]
    pub balance: Option<BalanceChoice>,
    /// Target minority-to-majority ratio for balancing.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub max_classifiers: Option<usize>,
    /// Only single-feature classifiers.
    #[arg(long)]
    pub no_pairs: bool,
    #[arg(long)]
    pub threshold_rule: Option<ThresholdRule>,
    /// Total weight the solved weights sum to.
    #[arg(long)]
    pub sum_constraint: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BalanceChoice {
    None,
    Downsample,
    Smote,
    Adasyn,
}

impl BalanceChoice {
    fn strategy(self) -> Option<Strategy> {
        match self {
            BalanceChoice::None => None,
            BalanceChoice::Downsample => Some(Strategy::Downsample),
            BalanceChoice::Smote => Some(Strategy::Smote),
            BalanceChoice::Adasyn => Some(Strategy::Adasyn),
        }
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if self.balance == Some(BalanceChoice::None) {
            cfg.balance = None;
        } else if self.balance.is_some() || self.ratio.is_some() || self.k_neighbors.is_some() {
            let mut b = cfg.balance.clone().unwrap_or_default();
            if let Some(s) = self.balance.and_then(BalanceChoice::strategy) {
                b.strategy = s;
            }
            if let Some(r) = self.ratio {
                b.target_ratio = r;
            }
            if let Some(k) = self.k_neighbors {
                b.k_neighbors = k;
            }
            cfg.balance = Some(b);
        }
        if let Some(v) = self.max_classifiers {
            cfg.pool.max_classifiers = v;
        }
        if self.no_pairs {
            cfg.pool.include_pairs = false;
        }
        if let Some(v) = self.threshold_rule {
            cfg.threshold_rule = v;
        }
        if let Some(v) = self.sum_constraint {
            cfg.sum_constraint = v;
        }
        self.solver.apply(&mut cfg.solver);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled CSV input.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Comma-separated λ candidates, chosen by validation AUC.
    #[arg(long, value_delimiter = ',')]
    pub tune_lambda: Option<Vec<f64>>,
    /// Validation share used by `--tune-lambda`.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    /// Train on this fraction of the input only; the rest is held out.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Keep class proportions when splitting.
    #[arg(long)]
    pub stratify: bool,
    /// Where to write the held-out rows (requires `--train-fraction`).
    #[arg(long)]
    pub holdout_out: Option<PathBuf>,
    /// Also write the assembled Hamiltonian.
    #[arg(long)]
    pub hamiltonian_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the model's feature columns (extra columns are ignored).
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV of scores and labels (same as `--out`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Auc,
    BalancedAccuracy,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Auc => "auc",
            MetricName::BalancedAccuracy => "balanced_accuracy",
        })
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long, value_enum, default_value_t = MetricName::Auc)]
    pub metric: MetricName,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Hamiltonian JSON file.
    #[arg(long)]
    pub hamiltonian: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Run exactly `--max-iters` iterations.
    #[arg(long)]
    pub fixed_iterations: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub axis: Axis,
    /// Comma-separated, strictly increasing axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Balancing strategy for the class-ratio axis.
    #[arg(long, default_value = "smote")]
    pub strategy: Strategy,
    /// Worker threads per trial (default: all).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Report format; guessed from the `--out` extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// Also write the strategy/ratio/AUC table here.
    #[arg(long)]
    pub accuracy_out: Option<PathBuf>,
    #[command(flatten)]
    pub data: SyntheticArgs,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Show only the heaviest K classifiers.
    #[arg(long)]
    pub top: Option<usize>,
}

/// Problems with the invocation itself rather than with its inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!();
            let _ = Cli::command().write_long_help(&mut std::io::stderr());
            1
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(level);
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("{THREADS_ENV} must be a nonnegative integer, got `{raw}`")))?;
    if n > 0 {
        // Fails only if the global pool already exists, e.g. on a second
        // in-process dispatch; the first setting then stays in force.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialised");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let seed = cli.seed;
    let out = cli.out.clone();
    let config = cli.config.clone();
    match cli.command {
        Command::Generate(a) => cmd_generate(a, seed, out),
        Command::Train(a) => cmd_train(a, seed, out, config),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Solve(a) => cmd_solve(a, seed, out),
        Command::Bench(a) => cmd_bench(a, seed, out, config),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn require_out(out: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    out.ok_or_else(|| usage(format!("`--out` is required: where to write the {what}")))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(a: GenerateArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "dataset CSV")?;
    let ds = generate_synthetic(&a.data.spec(seed.unwrap_or(0)))?;
    ds.write_csv(&out, &a.label_column, "1", "-1")?;
    log::info!("wrote {} rows to {}", ds.n_samples(), out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs, seed: Option<u64>, out: Option<PathBuf>, config: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "model JSON")?;
    if a.holdout_out.is_some() && a.train_fraction.is_none() {
        return Err(usage("`--holdout-out` needs `--train-fraction`"));
    }
    let mut cfg = load_config(config.as_deref())?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    a.flags.apply(&mut cfg);
    let split_seed = seed.unwrap_or(cfg.solver.seed);

    let ds = load_csv(&a.input, &a.labels.label_column, &a.labels.positive_label)?;
    let train_ds = match a.train_fraction {
        Some(f) => {
            let (tr, te) = train_test_split(&ds, f, split_seed, a.stratify)?;
            if let Some(h) = &a.holdout_out {
                te.write_csv(h, &a.labels.label_column, &a.labels.positive_label, &negative_label(&a.labels.positive_label))?;
            }
            tr
        }
        None => ds,
    };

    let (model, ham) = match &a.tune_lambda {
        Some(lambdas) => {
            let (m, scores) = tune_lambda(&train_ds, &cfg, lambdas, a.validation_fraction, split_seed)?;
            for s in &scores {
                log::info!("lambda {}: validation AUC {:.5}", s.lambda, s.validation_auc);
            }
            let ham = if a.hamiltonian_out.is_some() {
                let c = TrainConfig { lambda: m.lambda, ..cfg.clone() };
                Some(train_with_hamiltonian(&train_ds, &c)?.hamiltonian)
            } else {
                None
            };
            (m, ham)
        }
        None => {
            let o = train_with_hamiltonian(&train_ds, &cfg)?;
            (o.model, Some(o.hamiltonian))
        }
    };
    model.save(&out)?;
    if let (Some(path), Some(ham)) = (&a.hamiltonian_out, ham) {
        ham.write(path)?;
    }
    log::info!("wrote model with {} classifiers to {}", model.pool.len(), out.display());
    Ok(())
}

/// Label written for negatives so that a reload with the same positive label
/// reads them back as negatives.
fn negative_label(positive: &str) -> String {
    match positive {
        "1" => "-1".into(),
        _ => format!("not_{positive}"),
    }
}

fn cmd_predict(a: PredictArgs, out: Option<PathBuf>) -> Result<()> {
    let out = match (a.output, out) {
        (Some(o), _) | (None, Some(o)) => o,
        (None, None) => return Err(usage("`--output` (or `--out`) is required")),
    };
    let m = Model::load(&a.model)?;
    let x = dataset::load_feature_columns(&a.input, &m.feature_names)?;
    let scores = model::score_matrix(&m, &x)?;
    let mut text = String::from("score,prediction\n");
    for s in scores {
        let label = if s > m.threshold { 1 } else { -1 };
        text.push_str(&format!("{s},{label}\n"));
    }
    std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateResult {
    metric: MetricName,
    value: f64,
    n_samples: usize,
    n_positive: usize,
}

fn labeled_for_model(m: &Model, path: &Path, labels: &LabelArgs) -> Result<Dataset> {
    let ds = load_csv(path, &labels.label_column, &labels.positive_label)?;
    let x = dataset::load_feature_columns(path, &m.feature_names)?;
    Ok(Dataset::new(x, ds.labels().to_vec(), m.feature_names.clone())?)
}

fn cmd_evaluate(a: EvaluateArgs, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "metric JSON")?;
    let m = Model::load(&a.model)?;
    let ds = labeled_for_model(&m, &a.input, &a.labels)?;
    let scores = m.decision_scores(&ds)?;
    let value = match a.metric {
        MetricName::Auc => model::auc(&scores, ds.labels())?,
        MetricName::BalancedAccuracy => balanced_accuracy(&scores, ds.labels(), m.threshold)?,
    };
    let n_positive = ds.labels().iter().filter(|&&l| l == Label::Positive).count();
    write_json(&out, &EvaluateResult { metric: a.metric, value, n_samples: ds.n_samples(), n_positive })
}

fn cmd_solve(a: SolveArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "solution JSON")?;
    let mut cfg = SolverConfig::default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    a.solver.apply(&mut cfg);
    cfg.fixed_iterations = a.fixed_iterations;
    let ham = Hamiltonian::read(&a.hamiltonian)?;
    let sol = solver::solve(&ham, &cfg)?;
    log::info!("energy {:.9e} after {} iterations", sol.energy, sol.iterations);
    write_json(&out, &sol)
}

fn cmd_bench(a: BenchArgs, seed: Option<u64>, out: Option<PathBuf>, config: Option<PathBuf>) -> Result<()> {
    let out = require_out(out, "bench report")?;
    let mut train = load_config(config.as_deref())?;
    a.flags.apply(&mut train);
    let spec = SweepSpec {
        axis: a.axis,
        values: a.values,
        repeats: a.repeats,
        train,
        data: a.data.spec(0),
        test_fraction: a.test_fraction,
        strategy: a.strategy,
        seed: seed.unwrap_or(0),
        vary_seed: true,
        threads: a.threads,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let report = bench::run_sweep(&spec)?;
    let format = a.format.unwrap_or_else(|| Format::from_path(&out));
    bench::emit(&report, format, &out)?;
    if let Some(path) = &a.accuracy_out {
        bench::emit_accuracy_table(std::slice::from_ref(&report), path)?;
    }
    let failed: usize = report.rows.iter().map(|r| r.errors.len()).sum();
    if failed > 0 {
        log::warn!("{failed} trial(s) failed; see the errors column");
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let m = Model::load(&a.model)?;
    print!("{}", inspect_text(&m, a.top));
    Ok(())
}

/// Human-readable model summary with classifiers in descending weight order.
pub fn inspect_text(m: &Model, top: Option<usize>) -> String {
    let mut order: Vec<usize> = (0..m.pool.len()).collect();
    order.sort_by(|&a, &b| m.weights[b].total_cmp(&m.weights[a]).then(a.cmp(&b)));
    let shown = top.unwrap_or(order.len()).min(order.len());
    let nonzero = m.weights.iter().filter(|&&w| w > 0.0).count();

    let mut s = String::new();
    s.push_str(&format!(
        "classifiers: {} ({} nonzero), weight sum R = {}, lambda = {}, threshold = {}\n",
        m.pool.len(),
        nonzero,
        m.sum_constraint,
        m.lambda,
        m.threshold
    ));
    s.push_str(&format!(
        "backend: {}, energy: {:.6e}, iterations: {}, converged: {}\n",
        m.metadata.backend.name(),
        m.metadata.energy,
        m.metadata.iterations,
        m.metadata.converged
    ));
    s.push_str("rank\tweight\tfeatures\tcoefficients\tintercept\ttrain_auc\n");
    for (rank, &i) in order.iter().take(shown).enumerate() {
        let wc = &m.pool[i];
        let names: Vec<&str> = wc
            .feature_indices
            .iter()
            .map(|&j| m.feature_names.get(j).map(String::as_str).unwrap_or("?"))
            .collect();
        let coefs: Vec<String> = wc.coefficients.iter().map(|c| format!("{c:.6}")).collect();
        s.push_str(&format!(
            "{}\t{:.12}\t{}\t{}\t{:.6}\t{:.4}\n",
            rank + 1,
            m.weights[i],
            names.join("+"),
            coefs.join(","),
            wc.intercept,
            wc.train_auc
        ));
    }
    s
}

/// Convenience for callers that want an error instead of an exit code.
pub fn try_run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| anyhow!(e.to_string()))?;
    run(cli)
}
