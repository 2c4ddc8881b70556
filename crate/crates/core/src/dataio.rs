//! CSV datasets, splits, cross-validation folds and feature standardization.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LpnnError, Result};
use crate::network::Head;
use crate::serde_rows;
use crate::train::{TargetSet, TrainData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Array1<f64>),
    /// Dense class indices plus the original label of each index.
    Classes {
        indices: Vec<usize>,
        labels: Vec<String>,
    },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Classes { indices, .. } => indices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header name of the target column, or its zero-based index.
    pub target_column: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub task: Task,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Targets,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Targets, feature_names: Option<Vec<String>>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(LpnnError::Data("dataset has no rows".into()));
        }
        if targets.len() != n {
            return Err(LpnnError::Data(format!(
                "{n} feature rows but {} targets",
                targets.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(LpnnError::Data("features contain non-finite values".into()));
        }
        match &targets {
            Targets::Values(v) if v.iter().any(|t| !t.is_finite()) => {
                return Err(LpnnError::Data("targets contain non-finite values".into()));
            }
            Targets::Classes { indices, labels } if indices.iter().any(|&c| c >= labels.len()) => {
                return Err(LpnnError::Data("class index out of range".into()));
            }
            _ => {}
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(LpnnError::Data(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    features.ncols()
                )));
            }
        }
        Ok(Self {
            features,
            targets,
            feature_names,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Values(_) => Task::Regression,
            Targets::Classes { .. } => Task::Classification,
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    /// Output head and width suited to the targets.
    pub fn head(&self) -> (Head, usize) {
        match &self.targets {
            Targets::Values(_) => (Head::ScalarRegression, 1),
            Targets::Classes { labels, .. } if labels.len() <= 2 => (Head::BinaryLogit, 1),
            Targets::Classes { labels, .. } => (Head::KClassLogits, labels.len()),
        }
    }

    /// Rows in the given order; the label table is kept whole.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(LpnnError::Data(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let features = self.features.select(Axis(0), indices);
        let targets = match &self.targets {
            Targets::Values(v) => Targets::Values(v.select(Axis(0), indices)),
            Targets::Classes { indices: c, labels } => Targets::Classes {
                indices: indices.iter().map(|&i| c[i]).collect(),
                labels: labels.clone(),
            },
        };
        Dataset::new(features, targets, self.feature_names.clone())
    }

    /// Same targets with features replaced, e.g. after standardization.
    /// Feature names survive only if the column count is unchanged.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        let names = self.feature_names.clone().filter(|n| n.len() == features.ncols());
        Dataset::new(features, self.targets.clone(), names)
    }

    pub fn to_train_data(&self) -> Result<TrainData> {
        let targets = match &self.targets {
            Targets::Values(v) => TargetSet::Values(v.clone().insert_axis(Axis(1))),
            Targets::Classes { indices, .. } => TargetSet::Classes(indices.clone()),
        };
        TrainData::new(self.features.clone(), targets)
    }
}

fn resolve_target(schema: &CsvSchema, header: Option<&csv::StringRecord>, ncols: usize) -> Result<usize> {
    if let Some(h) = header {
        if let Some(pos) = h.iter().position(|name| name.trim() == schema.target_column) {
            return Ok(pos);
        }
    }
    match schema.target_column.trim().parse::<usize>() {
        Ok(i) if i < ncols => Ok(i),
        _ => Err(LpnnError::Data(format!(
            "target column '{}' not found",
            schema.target_column
        ))),
    }
}

/// Reads a comma-separated file. Line numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| LpnnError::Data(format!("{}: {e}", path.display())))?;
    let header = if schema.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| LpnnError::Data(format!("{}: {e}", path.display())))?
                .clone(),
        )
    } else {
        None
    };

    let mut ncols = header.as_ref().map(|h| h.len());
    let mut target_col = None;
    let mut features = Vec::new();
    let mut values = Vec::new();
    let mut class_idx = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_map: HashMap<String, usize> = HashMap::new();
    let mut n = 0usize;

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            LpnnError::Data(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let width = *ncols.get_or_insert(record.len());
        if record.len() != width {
            return Err(LpnnError::Data(format!(
                "line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        let tc = match target_col {
            Some(t) => t,
            None => {
                let t = resolve_target(schema, header.as_ref(), width)?;
                target_col = Some(t);
                t
            }
        };
        for (j, cell) in record.iter().enumerate() {
            if j == tc {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                LpnnError::Data(format!(
                    "line {line}, column {}: cannot parse '{cell}' as a number",
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(LpnnError::Data(format!(
                    "line {line}, column {}: non-finite value",
                    j + 1
                )));
            }
            features.push(v);
        }
        let cell = &record[tc];
        match schema.task {
            Task::Regression => {
                let v: f64 = cell.parse().map_err(|_| {
                    LpnnError::Data(format!(
                        "line {line}, column {}: cannot parse target '{cell}' as a number",
                        tc + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(LpnnError::Data(format!("line {line}: non-finite target")));
                }
                values.push(v);
            }
            Task::Classification => {
                let next = labels.len();
                let idx = *label_map.entry(cell.to_string()).or_insert_with(|| {
                    labels.push(cell.to_string());
                    next
                });
                class_idx.push(idx);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(LpnnError::Data(format!("{}: no data rows", path.display())));
    }
    let width = ncols.expect("at least one row");
    let tc = target_col.expect("resolved with first row");
    let features = Array2::from_shape_vec((n, width - 1), features).expect("row lengths checked");
    let feature_names = header.map(|h| {
        h.iter()
            .enumerate()
            .filter(|&(j, _)| j != tc)
            .map(|(_, s)| s.to_string())
            .collect()
    });
    let targets = match schema.task {
        Task::Regression => Targets::Values(Array1::from(values)),
        Task::Classification => Targets::Classes {
            indices: class_idx,
            labels,
        },
    };
    Dataset::new(features, targets, feature_names)
}

/// Writes features followed by a final target column named `target`, with
/// enough digits that reloading reproduces every value exactly.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let names: Vec<String> = match dataset.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..dataset.n_features()).map(|j| format!("x{j}")).collect(),
    };
    out.push_str(&names.join(","));
    out.push_str(",target\n");
    for (i, row) in dataset.features.rows().into_iter().enumerate() {
        for v in row {
            out.push_str(&format!("{v:.16e},"));
        }
        match &dataset.targets {
            Targets::Values(v) => out.push_str(&format!("{:.16e}", v[i])),
            Targets::Classes { indices, labels } => out.push_str(&labels[indices[i]]),
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Schema matching the layout produced by [`write_csv`].
pub fn written_schema(task: Task) -> CsvSchema {
    CsvSchema {
        target_column: "target".into(),
        has_header: true,
        task,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle cut into train/val/test at rounded cumulative fractions.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(LpnnError::Config(format!(
            "split fractions must be non-negative, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(LpnnError::Config(format!("split fractions sum to {total} > 1")));
    }
    let idx = shuffled(n, seed);
    let cut = |f: f64| ((f * n as f64).round() as usize).min(n);
    let a = cut(fractions[0]);
    let b = cut(fractions[0] + fractions[1]).max(a);
    let c = cut(total).max(b);
    Ok(SplitIndices {
        seed,
        train: idx[..a].to_vec(),
        val: idx[a..b].to_vec(),
        test: idx[b..c].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// `k` folds over a seeded permutation; fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(LpnnError::Config(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let idx = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut val = idx[start..start + size].to_vec();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, val });
        start += size;
    }
    Ok(folds)
}

pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature affine standardization using training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "serde_rows::vector")]
    mean: Array1<f64>,
    #[serde(with = "serde_rows::vector")]
    std: Array1<f64>,
}

impl Standardizer {
    /// Fits on the training features only.
    pub fn fit(train: ArrayView2<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(LpnnError::Data("cannot fit a standardizer on zero rows".into()));
        }
        let mean = train.mean_axis(Axis(0)).expect("non-empty");
        let std = train.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<f64> {
        &self.std
    }

    fn check(&self, xs: &ArrayView2<f64>) -> Result<()> {
        if xs.ncols() != self.mean.len() {
            return Err(LpnnError::Shape(format!(
                "standardizer has {} features, data has {}",
                self.mean.len(),
                xs.ncols()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&xs)?;
        Ok((&xs - &self.mean) / &self.std)
    }

    pub fn inverse_transform(&self, zs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&zs)?;
        Ok(&zs * &self.std + &self.mean)
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        Ok(self.transform(view)?.into_raw_vec_and_offset().0)
    }
}
