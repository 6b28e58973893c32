//! CSV ingestion: label mapping, missing-value rejection and feature
//! standardization.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use pmgp_core::linalg::Matrix;
use pmgp_core::Dataset;

use crate::error::{Error, Result};

const MISSING: [&str; 5] = ["", "NA", "N/A", "?", "nan"];

/// Window-glass classes, by UCI number and by the short names used in some
/// redistributions.
const GLASS_WINDOW: [&str; 8] = ["1", "2", "3", "4", "WinF", "WinNF", "Veh", "VehNF"];
const GLASS_OTHER: [&str; 6] = ["5", "6", "7", "Con", "Tabl", "Head"];

#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    /// Listed values map to +1, all others to −1.
    Positive(Vec<String>),
    /// Window glass (+1) against non-window glass (−1).
    Glass,
}

impl LabelRule {
    fn map(&self, raw: &str) -> std::result::Result<f64, String> {
        match self {
            LabelRule::Positive(pos) => Ok(if pos.iter().any(|p| p == raw) { 1.0 } else { -1.0 }),
            LabelRule::Glass => {
                if GLASS_WINDOW.contains(&raw) {
                    Ok(1.0)
                } else if GLASS_OTHER.contains(&raw) {
                    Ok(-1.0)
                } else {
                    Err(format!("unknown glass class {raw:?}"))
                }
            }
        }
    }
}

/// How to read one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Header name of the label column; `None` takes the last column.
    pub label_column: Option<String>,
    pub labels: LabelRule,
    pub drop_columns: Vec<String>,
    /// Standardize features to zero mean and unit (population) SD.
    pub normalize: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            label_column: None,
            labels: LabelRule::Positive(vec!["1".into(), "+1".into()]),
            drop_columns: Vec::new(),
            normalize: true,
        }
    }
}

impl DatasetSpec {
    /// Known layouts: `pima`, `breast`, `glass`, `banknote`, `thyroid`,
    /// `synthetic` (raw features, ±1 labels in the last column).
    pub fn preset(name: &str) -> Option<Self> {
        let pos = |v: &[&str]| LabelRule::Positive(v.iter().map(|s| s.to_string()).collect());
        let spec = match name {
            "pima" => Self { labels: pos(&["Yes", "1"]), ..Self::default() },
            "breast" => Self { labels: pos(&["malignant", "4"]), drop_columns: vec!["ID".into()], ..Self::default() },
            "glass" => Self { labels: LabelRule::Glass, drop_columns: vec!["Id".into()], ..Self::default() },
            "banknote" => Self { labels: pos(&["1"]), ..Self::default() },
            // normal function against hyper- and hypothyroid
            "thyroid" => Self { label_column: Some("class".into()), labels: pos(&["1"]), ..Self::default() },
            "synthetic" | "raw" => Self { normalize: false, ..Self::default() },
            _ => return None,
        };
        Some(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based record number, header excluded.
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: Dataset,
    pub feature_names: Vec<String>,
    pub rejected: Vec<RejectedRow>,
    /// Features with zero spread, left unscaled.
    pub constant_features: Vec<String>,
}

/// Standardization taken from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Normalization {
    pub fn of(data: &Dataset) -> Self {
        Self { means: data.feature_means().to_vec(), sds: data.feature_sds().to_vec() }
    }
}

pub fn load_dataset(path: &Path, spec: &DatasetSpec) -> Result<LoadedDataset> {
    load_with(path, spec, None)
}

/// Loads a test set, scaling its features with the training normalization.
pub fn load_test_dataset(path: &Path, spec: &DatasetSpec, train: &Normalization) -> Result<LoadedDataset> {
    load_with(path, spec, Some(train))
}

fn load_with(path: &Path, spec: &DatasetSpec, fixed: Option<&Normalization>) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers: Vec<String> = rdr.headers().map_err(|e| Error::csv(path, e))?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        return Err(Error::input(format!("{}: need at least one feature and a label column", path.display())));
    }
    let label_idx = match &spec.label_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("{}: no label column {name:?}", path.display())))?,
        None => headers.len() - 1,
    };
    let dropped: BTreeSet<&str> = spec.drop_columns.iter().map(String::as_str).collect();
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && !dropped.contains(headers[i].as_str()) && !headers[i].is_empty())
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::input(format!("{}: no feature columns left", path.display())));
    }
    let d = feature_idx.len();

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut rejected = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let reject = |reason: String| RejectedRow { record: k + 1, reason };
        let parsed: std::result::Result<(Vec<f64>, f64), String> = (|| {
            let mut row = Vec::with_capacity(d);
            for &i in &feature_idx {
                let cell = record.get(i).unwrap_or("");
                if MISSING.contains(&cell) {
                    return Err(format!("missing value in column {:?}", headers[i]));
                }
                let v: f64 = cell.parse().map_err(|_| format!("non-numeric {cell:?} in column {:?}", headers[i]))?;
                if !v.is_finite() {
                    return Err(format!("non-finite value in column {:?}", headers[i]));
                }
                row.push(v);
            }
            let raw = record.get(label_idx).unwrap_or("");
            if MISSING.contains(&raw) {
                return Err("missing label".to_string());
            }
            Ok((row, spec.labels.map(raw)?))
        })();
        match parsed {
            Ok((row, label)) => {
                values.extend(row);
                y.push(label);
            }
            Err(reason) => rejected.push(reject(reason)),
        }
    }
    for r in &rejected {
        warn!("{}: record {} rejected: {}", path.display(), r.record, r.reason);
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::input(format!("{}: no usable rows", path.display())));
    }
    let mut x = Matrix::from_row_major(n, d, values).expect("rows have d features");
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut constant_features = Vec::new();
    let data = match (fixed, spec.normalize) {
        (Some(norm), _) => {
            if norm.means.len() != d {
                return Err(Error::input(format!(
                    "{}: {d} features but the training data had {}",
                    path.display(),
                    norm.means.len()
                )));
            }
            apply(&mut x, &norm.means, &norm.sds);
            Dataset::with_normalization(x, y, norm.means.clone(), norm.sds.clone())?
        }
        (None, true) => {
            let (means, mut sds) = column_moments(&x);
            for (j, sd) in sds.iter_mut().enumerate() {
                if *sd == 0.0 {
                    warn!("{}: feature {:?} is constant; leaving its scale at 1", path.display(), feature_names[j]);
                    constant_features.push(feature_names[j].clone());
                    *sd = 1.0;
                }
            }
            apply(&mut x, &means, &sds);
            Dataset::with_normalization(x, y, means, sds)?
        }
        (None, false) => Dataset::new(x, y)?,
    };
    Ok(LoadedDataset { data, feature_names, rejected, constant_features })
}

/// Column means and population standard deviations.
pub fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut means = vec![0.0; d];
    for i in 0..x.rows() {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    (means, var.into_iter().map(|s| (s / n).sqrt()).collect())
}

fn apply(x: &mut Matrix, means: &[f64], sds: &[f64]) {
    for i in 0..x.rows() {
        for ((v, m), s) in x.row_mut(i).iter_mut().zip(means).zip(sds) {
            *v = (*v - m) / s;
        }
    }
}
