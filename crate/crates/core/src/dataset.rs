//! Feature datasets: the pre-extracted activations that feed a head.
//!
//! Two on-disk formats are supported.
//!
//! Binary (`EPTL`), little-endian throughout:
//!
//! ```text
//! magic "EPTL" | version u32 = 1 | n u32 | d u32 | C u32
//! n*d f32 features, row-major
//! n   u32 labels
//! ```
//!
//! CSV: a header `f0,...,f{d-1},label` followed by one sample per row. The
//! class count is not stored in CSV; it is taken as `max(label) + 1`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derived_rng, stream};
use crate::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"EPTL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Binary,
    Csv,
}

impl DatasetFormat {
    /// Guesses the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" | "eptl" => Ok(DatasetFormat::Binary),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset format {other:?}"
            ))),
        }
    }
}

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f32>,
    labels: Vec<usize>,
    n_classes: usize,
    name: String,
}

impl FeatureDataset {
    /// Builds a dataset, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f32>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = FeatureDataset {
            features,
            labels,
            n_classes,
            name: name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.features.dim();
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch {
                location: "labels".into(),
                reason: format!("{} labels for {n} rows", self.labels.len()),
            });
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("feature_dim must be >= 1".into()));
        }
        if n < self.n_classes {
            return Err(Error::InvalidDataset(format!(
                "{n} samples for {} classes",
                self.n_classes
            )));
        }
        if let Some((row, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.n_classes)
        {
            return Err(Error::LabelOutOfRange {
                location: format!("row {row}"),
                label: label as u64,
                n_classes: self.n_classes,
            });
        }
        for ((row, col), v) in self.features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("row {row}, column {col}"),
                });
            }
        }
        Ok(())
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Rows selected by `indices`, in that order. Shape invariants carry
    /// over from `self`; the `n >= n_classes` floor is not re-checked, so a
    /// small test fold is allowed.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> FeatureDataset {
        FeatureDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            name: name.into(),
        }
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn to_binary_bytes(&self) -> Vec<u8> {
        let (n, d) = self.features.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d + 4 * n);
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [FORMAT_VERSION, n as u32, d as u32, self.n_classes as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.features.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        out
    }

    pub fn from_binary_bytes(bytes: &[u8], name: impl Into<String>) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedHeader {
                offset: bytes.len() as u64,
                reason: format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len()),
            });
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::MalformedHeader {
                offset: 0,
                reason: format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4])),
            });
        }
        let word = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(Error::MalformedHeader {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let (n, d, c) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_add(n))
            .and_then(|w| w.checked_mul(4))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::MalformedHeader {
                offset: 8,
                reason: format!("header sizes overflow (n={n}, d={d})"),
            })?;
        if bytes.len() != expected {
            return Err(Error::DimensionMismatch {
                location: format!("byte {}", bytes.len().min(expected)),
                reason: format!(
                    "header n={n}, d={d} implies {expected} bytes, file has {}",
                    bytes.len()
                ),
            });
        }
        let mut features = Vec::with_capacity(n * d);
        for i in 0..n * d {
            let off = HEADER_LEN + 4 * i;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("byte {off} (row {}, column {})", i / d, i % d),
                });
            }
            features.push(v);
        }
        let label_base = HEADER_LEN + 4 * n * d;
        let mut labels = Vec::with_capacity(n);
        for row in 0..n {
            let off = label_base + 4 * row;
            let l = word(off) as usize;
            if l >= c {
                return Err(Error::LabelOutOfRange {
                    location: format!("byte {off} (row {row})"),
                    label: l as u64,
                    n_classes: c,
                });
            }
            labels.push(l);
        }
        let features = Array2::from_shape_vec((n, d), features).expect("length checked");
        FeatureDataset::new(name, features, labels, c)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_binary_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let write = |w: &mut std::io::BufWriter<fs::File>| -> std::io::Result<()> {
            let header: Vec<String> = (0..self.feature_dim()).map(|j| format!("f{j}")).collect();
            writeln!(w, "{},label", header.join(","))?;
            for (row, &label) in self.features.outer_iter().zip(&self.labels) {
                for v in row.iter() {
                    write!(w, "{v},")?;
                }
                writeln!(w, "{label}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_reader(reader: impl BufRead, name: impl Into<String>) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::io("<csv>", e))?,
            None => {
                return Err(Error::MalformedHeader {
                    offset: 0,
                    reason: "empty CSV".into(),
                })
            }
        };
        let columns: Vec<&str> = header.trim_end().split(',').map(str::trim).collect();
        let d = columns.len().saturating_sub(1);
        if d == 0 || columns.last() != Some(&"label") {
            return Err(Error::MalformedHeader {
                offset: 0,
                reason: "CSV header must be f0,...,f{d-1},label".into(),
            });
        }
        for (j, col) in columns[..d].iter().enumerate() {
            if *col != format!("f{j}") {
                return Err(Error::MalformedHeader {
                    offset: 0,
                    reason: format!("column {j} is {col:?}, expected \"f{j}\""),
                });
            }
        }

        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<csv>", e))?;
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    location: format!("line {line_no}"),
                    reason: format!("{} fields, expected {}", fields.len(), d + 1),
                });
            }
            for (j, field) in fields[..d].iter().enumerate() {
                let v: f32 = field.trim().parse().map_err(|_| Error::DimensionMismatch {
                    location: format!("line {line_no}, column {j}"),
                    reason: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        location: format!("line {line_no}, column {j}"),
                    });
                }
                features.push(v);
            }
            let label: usize = fields[d]
                .trim()
                .parse()
                .map_err(|_| Error::DimensionMismatch {
                    location: format!("line {line_no}, label"),
                    reason: format!("not a class index: {:?}", fields[d]),
                })?;
            labels.push(label);
        }
        let n = labels.len();
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let features = Array2::from_shape_vec((n, d), features).expect("row lengths checked");
        FeatureDataset::new(name, features, labels, n_classes)
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

/// Loads and validates a feature file.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let name = dataset_name(path);
    match format {
        DatasetFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            FeatureDataset::from_binary_bytes(&bytes, name)
        }
        DatasetFormat::Csv => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            FeatureDataset::from_csv_reader(BufReader::new(file), name)
        }
    }
}

/// How a dataset is split into train and test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitSpec {
    /// A predefined split: the listed rows form the test set.
    FixedTrainTest { test_indices: Vec<usize> },
    /// Stratified k-fold cross-validation.
    KFold { k: usize, seed: u64 },
}

pub type FoldPair = (FeatureDataset, FeatureDataset);

/// Assigns every row to one of `k` folds.
///
/// Rows of each class are shuffled and dealt round-robin; the dealing
/// position carries over between classes so fold sizes differ by at most
/// one. A class with fewer than `k` rows simply lands in fewer folds.
pub fn fold_assignment(dataset: &FeatureDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = dataset.n_samples();
    if k < 2 {
        return Err(Error::InvalidSplit(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidSplit(format!("k = {k} exceeds n = {n}")));
    }
    let mut by_class = vec![Vec::new(); dataset.n_classes()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut rows) in by_class.into_iter().enumerate() {
        let mut rng = derived_rng(seed, stream::FOLDS, class as u64);
        rows.shuffle(&mut rng);
        for row in rows {
            folds[next].push(row);
            next = (next + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Builds the train/test pair where fold `fold_index` is the test set.
pub fn make_fold(
    dataset: &FeatureDataset,
    k: usize,
    seed: u64,
    fold_index: usize,
) -> Result<FoldPair> {
    if fold_index >= k {
        return Err(Error::InvalidSplit(format!(
            "fold_index {fold_index} must be < k = {k}"
        )));
    }
    let folds = fold_assignment(dataset, k, seed)?;
    Ok(pair_for_fold(dataset, &folds, fold_index))
}

fn pair_for_fold(dataset: &FeatureDataset, folds: &[Vec<usize>], test: usize) -> FoldPair {
    let train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != test)
        .flat_map(|(_, f)| f.iter().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let name = dataset.name();
    (
        dataset.subset(&train, format!("{name}-fold{test}-train")),
        dataset.subset(&folds[test], format!("{name}-fold{test}-test")),
    )
}

/// Splits a dataset according to `spec`.
pub fn make_folds(dataset: &FeatureDataset, spec: &SplitSpec) -> Result<Vec<FoldPair>> {
    match spec {
        SplitSpec::FixedTrainTest { test_indices } => {
            let n = dataset.n_samples();
            let mut is_test = vec![false; n];
            for &i in test_indices {
                if i >= n {
                    return Err(Error::InvalidSplit(format!("test index {i} >= n = {n}")));
                }
                if is_test[i] {
                    return Err(Error::InvalidSplit(format!("test index {i} repeated")));
                }
                is_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
            if train.is_empty() || test_indices.is_empty() {
                return Err(Error::InvalidSplit(
                    "both partitions must be non-empty".into(),
                ));
            }
            let name = dataset.name();
            Ok(vec![(
                dataset.subset(&train, format!("{name}-train")),
                dataset.subset(test_indices, format!("{name}-test")),
            )])
        }
        SplitSpec::KFold { k, seed } => {
            let folds = fold_assignment(dataset, *k, *seed)?;
            Ok((0..*k).map(|j| pair_for_fold(dataset, &folds, j)).collect())
        }
    }
}
