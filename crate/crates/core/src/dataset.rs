//! Labeled tabular data: CSV ingestion, synthetic generation, splitting and
//! column standardization.
//!
//! Labels are carried as [`Label`] everywhere inside the crate. Files that use
//! `{0, 1}` or any other encoding are mapped at the boundary by comparing the
//! raw cell against a designated positive value.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("feature column `{0}` not found in header")]
    MissingFeatureColumn(String),
    #[error("cannot parse `{value}` as a number at line {line}, column `{column}`")]
    ParseCell {
        line: u64,
        column: String,
        value: String,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("dataset has no rows")]
    Empty,
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("split fraction {fraction} leaves an empty partition for {n} samples")]
    EmptyPartition { fraction: f64, n: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Binary class label. The numeric value used in objectives is [`Label::sign`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn from_sign(value: f64) -> Option<Label> {
        if value == 1.0 {
            Some(Label::Positive)
        } else if value == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

/// Feature matrix (rows are samples) with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<Label>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let (rows, cols) = features.dim();
        if rows == 0 {
            return Err(DatasetError::Empty);
        }
        if cols == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if labels.len() != rows {
            return Err(DatasetError::Shape(format!(
                "{rows} feature rows but {} labels",
                labels.len()
            )));
        }
        if feature_names.len() != cols {
            return Err(DatasetError::Shape(format!(
                "{cols} feature columns but {} names",
                feature_names.len()
            )));
        }
        if let Some(((row, column), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row, column });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Builds a dataset with generated column names `f0, f1, ...`.
    pub fn from_parts(features: Array2<f64>, labels: Vec<Label>) -> Result<Self, DatasetError> {
        let names = default_feature_names(features.ncols());
        Self::new(features, labels, names)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, s: usize) -> ArrayView1<'_, f64> {
        self.features.row(s)
    }

    /// Labels as ±1 reals.
    pub fn label_signs(&self) -> Array1<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Positive).count();
        (pos, self.labels.len() - pos)
    }

    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset, DatasetError> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset::new(features, labels, self.feature_names.clone())
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset, DatasetError> {
        Dataset::new(features, self.labels.clone(), self.feature_names.clone())
    }

    /// Writes the dataset as CSV with the label column appended last.
    pub fn write_csv(
        &self,
        path: &Path,
        label_column: &str,
        positive_label: &str,
        negative_label: &str,
    ) -> Result<(), DatasetError> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_column);
        writer.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_features() + 1);
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(match label {
                Label::Positive => positive_label.to_string(),
                Label::Negative => negative_label.to_string(),
            });
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

pub fn default_feature_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Reads a headed CSV file. Every column other than `label_column` must be
/// numeric; rows whose label cell equals `positive_label` become positives.
pub fn load_csv(path: &Path, label_column: &str, positive_label: &str) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column, positive_label)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    label_column: &str,
    positive_label: &str,
) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DatasetError::ParseCell {
                line,
                column: header[c].to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::ParseCell {
                    line,
                    column: header[c].to_string(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        let raw = record.get(label_idx).unwrap_or("");
        labels.push(if raw == positive_label {
            Label::Positive
        } else {
            Label::Negative
        });
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    let features = Array2::from_shape_vec((labels.len(), names.len()), values)
        .map_err(|e| DatasetError::Shape(e.to_string()))?;
    Dataset::new(features, labels, names)
}

/// Reads the named columns of a headed CSV file, in the given order. Other
/// columns, including any label column, are ignored.
pub fn load_feature_columns(path: &Path, names: &[String]) -> Result<Array2<f64>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr.headers()?.clone();
    let cols = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| DatasetError::MissingFeatureColumn(n.clone()))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for &c in &cols {
            let cell = record.get(c).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(DatasetError::ParseCell {
                        line,
                        column: header[c].to_string(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DatasetError::Empty);
    }
    Array2::from_shape_vec((rows, cols.len()), values).map_err(|e| DatasetError::Shape(e.to_string()))
}

/// Splits into `(train, test)`. Rows keep their original relative order
/// inside each partition.
///
/// With `stratified`, each class is split separately with
/// `round(train_fraction * class_size)` rows going to train.
pub fn train_test_split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Dataset, Dataset), DatasetError> {
    let n = ds.n_samples();
    let empty = DatasetError::EmptyPartition {
        fraction: train_fraction,
        n,
    };
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let groups: Vec<Vec<usize>> = if stratified {
        vec![ds.indices_of(Label::Positive), ds.indices_of(Label::Negative)]
    } else {
        vec![(0..n).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let k = (train_fraction * group.len() as f64).round() as usize;
        let k = k.min(group.len());
        train.extend_from_slice(&group[..k]);
        test.extend_from_slice(&group[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(empty);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select_rows(&train)?, ds.select_rows(&test)?))
}

/// Knobs for [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub class_sep: f64,
    pub minority_fraction: f64,
    pub flip_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_features: 20,
            n_informative: 10,
            class_sep: 1.0,
            minority_fraction: 0.5,
            flip_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: &str| Err(DatasetError::InvalidSpec(m.to_string()));
        if self.n_samples == 0 {
            return fail("n_samples must be positive");
        }
        if self.n_features == 0 || self.n_informative == 0 {
            return fail("n_features and n_informative must be positive");
        }
        if self.n_informative > self.n_features {
            return fail("n_informative exceeds n_features");
        }
        if !(self.class_sep.is_finite() && self.class_sep > 0.0) {
            return fail("class_sep must be positive");
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction <= 0.5) {
            return fail("minority_fraction must lie in (0, 0.5]");
        }
        if self.minority_count() < 1 {
            return fail("minority_fraction * n_samples must be at least 1");
        }
        if !(self.flip_fraction >= 0.0 && self.flip_fraction < 0.5) {
            return fail("flip_fraction must lie in [0, 0.5)");
        }
        Ok(())
    }

    pub fn minority_count(&self) -> usize {
        (self.minority_fraction * self.n_samples as f64).floor() as usize
    }

    pub fn flip_count(&self) -> usize {
        (self.flip_fraction * self.n_samples as f64).round() as usize
    }
}

/// Two-class Gaussian data. The positive (minority) class is centred at
/// `+class_sep/2` on every informative axis and the negative class at
/// `-class_sep/2`. Non-informative columns are random mixtures of the
/// informative ones plus unit noise. Exactly `flip_count()` labels are
/// inverted after generation.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples;
    let n_inf = spec.n_informative;
    let n_red = spec.n_features - n_inf;

    let n_pos = spec.minority_count();
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_pos { Label::Positive } else { Label::Negative })
        .collect();
    labels.shuffle(&mut rng);

    let mixing: Vec<f64> = (0..n_inf * n_red).map(|_| rng.random_range(-1.0..1.0)).collect();
    let half = spec.class_sep / 2.0;
    let mut features = Array2::<f64>::zeros((n, spec.n_features));
    for (mut row, label) in features.rows_mut().into_iter().zip(&labels) {
        let center = half * label.sign();
        for k in 0..n_inf {
            let z: f64 = rng.sample(StandardNormal);
            row[k] = center + z;
        }
        for r in 0..n_red {
            let mut v: f64 = rng.sample(StandardNormal);
            for k in 0..n_inf {
                v += mixing[k * n_red + r] * row[k];
            }
            row[n_inf + r] = v;
        }
    }

    let flips = spec.flip_count();
    if flips > 0 {
        for i in rand::seq::index::sample(&mut rng, n, flips) {
            labels[i] = labels[i].flipped();
        }
    }
    Dataset::from_parts(features, labels)
}

/// Per-column affine map fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl ScalerParams {
    pub fn identity(n_features: usize) -> Self {
        Self {
            means: vec![0.0; n_features],
            std_devs: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: ArrayView1<'_, f64>, out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(row).zip(&self.means).zip(&self.std_devs) {
            *o = (x - m) / s;
        }
    }
}

/// Zero-mean, unit-variance columns (population variance). Constant columns
/// are left as they are and recorded with mean 0 and std 1 so that
/// [`apply_scaler`] reproduces the output exactly.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, ScalerParams), DatasetError> {
    let n = ds.n_samples() as f64;
    let mut means = Vec::with_capacity(ds.n_features());
    let mut std_devs = Vec::with_capacity(ds.n_features());
    for col in ds.features().columns() {
        let mean = col.sum() / n;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            means.push(0.0);
            std_devs.push(1.0);
        } else {
            means.push(mean);
            std_devs.push(std);
        }
    }
    let params = ScalerParams { means, std_devs };
    let scaled = apply_scaler(ds, &params)?;
    Ok((scaled, params))
}

pub fn apply_scaler(ds: &Dataset, params: &ScalerParams) -> Result<Dataset, DatasetError> {
    if params.n_features() != ds.n_features() {
        return Err(DatasetError::Shape(format!(
            "scaler fitted on {} features, dataset has {}",
            params.n_features(),
            ds.n_features()
        )));
    }
    let mut features = ds.features().clone();
    for ((mut col, &m), &s) in features.columns_mut().into_iter().zip(&params.means).zip(&params.std_devs) {
        col.mapv_inplace(|x| (x - m) / s);
    }
    ds.with_features(features)
}
