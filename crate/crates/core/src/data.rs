//! Dataset ingestion, standardization and stratified fold plans.
//!
//! Two on-disk formats are supported:
//!
//! * CSV: comma separated, optional header row, `.` as decimal point. One
//!   column holds the class label (any string); every other cell must parse
//!   as a finite real number.
//! * LIBSVM: one sample per line, `label idx:val idx:val ...` with 1-based,
//!   strictly ascending indices. Absent indices are zero.
//!
//! In both cases labels are re-encoded to `0..c` in order of first
//! appearance and the original strings are kept as class names.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A dense labelled sample matrix.
///
/// Immutable after construction; every label is in `0..c` and every feature
/// is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with `n_classes` declared classes named `"0".."c-1"`.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let names = (0..n_classes).map(|k| k.to_string()).collect();
        Self::with_class_names(features, labels, names)
    }

    pub fn with_class_names(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        check_dim("label count", features.nrows(), labels.len())?;
        let c = class_names.len();
        if c < 2 {
            return Err(Error::TooFewClasses);
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::LabelOutOfRange { label, classes: c });
        }
        for ((row, column), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: row + 1,
                    column: column + 1,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Declared number of classes.
    pub fn c(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.c()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows selected by `indices`, in that order. Keeps the declared classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels, new feature matrix (must have the same row count).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        Dataset::with_class_names(features, self.labels.clone(), self.class_names.clone())
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Maps label strings to contiguous indices by first appearance.
#[derive(Default)]
struct LabelEncoder {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl LabelEncoder {
    fn encode(&mut self, raw: &str) -> usize {
        if let Some(&k) = self.index.get(raw) {
            return k;
        }
        let k = self.names.len();
        self.index.insert(raw.to_string(), k);
        self.names.push(raw.to_string());
        k
    }
}

fn parse_real(cell: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("cannot parse {:?} as a real number", cell),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite { row: line, column });
    }
    Ok(v)
}

/// Loads a CSV file. Errors report 1-based file line and column numbers.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    read_csv(open(path)?, label_column, header)
}

/// Parses CSV from any reader; see [`load_csv`].
pub fn read_csv<R: Read>(reader: R, label_column: &LabelColumn, header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut label_idx: Option<usize> = match label_column {
        LabelColumn::Index(i) => Some(*i),
        _ => None,
    };
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut encoder = LabelEncoder::default();
    let mut first = true;

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if first {
            first = false;
            width = Some(record.len());
            if header {
                if let LabelColumn::Name(name) = label_column {
                    label_idx = Some(
                        record
                            .iter()
                            .position(|h| h.trim() == name)
                            .ok_or_else(|| {
                                Error::Config(format!("label column {:?} not in header", name))
                            })?,
                    );
                }
                continue;
            }
            if let LabelColumn::Name(name) = label_column {
                return Err(Error::Config(format!(
                    "label column {:?} given by name but the file has no header",
                    name
                )));
            }
        }
        let expected = width.unwrap_or(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        let li = *label_idx.get_or_insert(expected - 1);
        if li >= expected {
            return Err(Error::Config(format!(
                "label column {} out of range for {} columns",
                li, expected
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == li {
                labels.push(encoder.encode(cell.trim()));
            } else {
                values.push(parse_real(cell, line, j + 1)?);
            }
        }
    }

    finish(values, labels, width.map_or(0, |w| w.saturating_sub(1)), encoder)
}

fn finish(values: Vec<f64>, labels: Vec<usize>, d: usize, encoder: LabelEncoder) -> Result<Dataset> {
    if labels.is_empty() {
        return Err(Error::NoSamples);
    }
    if encoder.names.len() < 2 {
        return Err(Error::TooFewClasses);
    }
    let features = Array2::from_shape_vec((labels.len(), d), values)
        .expect("row widths validated during parsing");
    Dataset::with_class_names(features, labels, encoder.names)
}

/// Writes `data` as CSV with header `f1,..,fd,label`; labels are written as
/// class names. Floats use the shortest round-trip representation.
pub fn write_csv<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("f{}", j)).collect();
    header.push("label".into());
    writeln!(out, "{}", header.join(","))?;
    for (row, &y) in data.features().rows().into_iter().zip(data.labels()) {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{:?}", v)).collect();
        cells.push(data.class_names()[y].clone());
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Loads a LIBSVM-format file.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_libsvm(BufReader::new(open(path)?)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses LIBSVM text from any buffered reader; see [`load_libsvm`].
pub fn read_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut encoder = LabelEncoder::default();
    let mut d = 0;

    for (lineno, text) in reader.lines().enumerate() {
        let line = lineno + 1;
        let text = text.map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })?;
        let text = text.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        let mut entries = Vec::new();
        let mut last = 0usize;
        for (t, token) in tokens.enumerate() {
            let column = t + 2;
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                line,
                column,
                message: format!("expected idx:val, found {:?}", token),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                column,
                message: format!("bad feature index {:?}", idx),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line,
                    column,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::IndicesNotAscending { line });
            }
            last = idx;
            entries.push((idx, parse_real(val, line, column)?));
        }
        d = d.max(last);
        labels.push(encoder.encode(label));
        rows.push(entries);
    }

    let mut values = vec![0.0; rows.len() * d];
    for (i, entries) in rows.iter().enumerate() {
        for &(idx, v) in entries {
            values[i * d + idx - 1] = v;
        }
    }
    finish(values, labels, d, encoder)
}

/// Per-feature mean and standard deviation fit on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Array1<f64>,
    /// Population standard deviation; constant features store 1.
    pub std: Array1<f64>,
}

pub fn fit_standardizer(train: &Dataset) -> StandardizationStats {
    let x = train.features();
    let n = x.nrows().max(1) as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let mut std = Array1::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
        let s = var.sqrt();
        std[j] = if s > 1e-12 * (1.0 + mean[j].abs()) { s } else { 1.0 };
    }
    StandardizationStats { mean, std }
}

impl StandardizationStats {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        check_dim("feature count", self.mean.len(), data.d())?;
        let x = (data.features() - &self.mean) / &self.std;
        data.with_features(x)
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        check_dim("feature count", self.mean.len(), data.d())?;
        let x = data.features() * &self.std + &self.mean;
        data.with_features(x)
    }
}

/// Convenience wrapper for [`StandardizationStats::apply`].
pub fn apply_standardizer(stats: &StandardizationStats, data: &Dataset) -> Result<Dataset> {
    stats.apply(data)
}

/// Stratified assignment of samples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Shuffles each class with a seeded ChaCha8 stream, concatenates the classes
/// in index order and deals the sequence round-robin into folds. Fold sizes
/// then differ by at most one, both overall and within each class.
pub fn make_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = data.n();
    if k < 2 || k > n {
        return Err(Error::FoldCount { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.c()];
    for (i, &y) in data.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut assignment = vec![0; n];
    let mut slot = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = slot % k;
            slot += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}

impl FoldPlan {
    /// `(train, test)` indices for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignment.len()).partition(|&i| self.assignment[i] == fold);
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn csv(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &LabelColumn::Last, true)
    }

    #[test]
    fn csv_three_rows() {
        let d = csv("f1,f2,y\n1,2,a\n3,4,b\n5,6,a\n").unwrap();
        assert_eq!((d.n(), d.d(), d.c()), (3, 2, 2));
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.class_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.features(), &array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn csv_label_by_name_and_index() {
        let text = "y,f1\na,1\nb,2\n";
        let by_name = read_csv(text.as_bytes(), &LabelColumn::Name("y".into()), true).unwrap();
        let by_idx = read_csv(text.as_bytes(), &LabelColumn::Index(0), true).unwrap();
        assert_eq!(by_name, by_idx);
        assert_eq!(by_name.features(), &array![[1.0], [2.0]]);
    }

    #[test]
    fn csv_nan_names_row_and_column() {
        let err = csv("f1,f2,y\n1,2,a\n3,NaN,b\n").unwrap_err();
        match err {
            Error::NonFinite { row, column } => assert_eq!((row, column), (3, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_single_class_rejected() {
        let err = csv("f1,y\n1,a\n2,a\n").unwrap_err();
        assert_eq!(err.to_string(), "fewer than 2 classes");
    }

    #[test]
    fn csv_ragged_and_garbage() {
        assert!(matches!(
            csv("f1,f2,y\n1,2,a\n3,b\n").unwrap_err(),
            Error::RaggedRow { line: 3, .. }
        ));
        assert!(matches!(
            csv("f1,f2,y\n1,x,a\n3,4,b\n").unwrap_err(),
            Error::Parse { line: 2, column: 2, .. }
        ));
    }

    #[test]
    fn libsvm_dense_fill() {
        let d = read_libsvm("1 1:2.0 3:1.0\n2 2:5.0\n".as_bytes()).unwrap();
        assert_eq!(d.features(), &array![[2.0, 0.0, 1.0], [0.0, 5.0, 0.0]]);
        assert_eq!(d.labels(), &[0, 1]);
    }

    #[test]
    fn libsvm_errors() {
        assert_eq!(read_libsvm("".as_bytes()).unwrap_err().to_string(), "no samples");
        let err = read_libsvm("1 3:1 2:4\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "line 1: indices not ascending");
        assert!(matches!(
            read_libsvm("1 2:1 2:4\n".as_bytes()).unwrap_err(),
            Error::IndicesNotAscending { line: 1 }
        ));
    }

    #[test]
    fn standardizer_examples() {
        let d = Dataset::new(array![[1.0, 5.0], [3.0, 5.0]], vec![0, 1], 2).unwrap();
        let stats = fit_standardizer(&d);
        assert_eq!(stats.mean, array![2.0, 5.0]);
        assert_eq!(stats.std, array![1.0, 1.0]);
        let z = stats.apply(&d).unwrap();
        assert_eq!(z.features(), &array![[-1.0, 0.0], [1.0, 0.0]]);

        let wide = Dataset::new(array![[1.0, 2.0, 3.0]], vec![0], 2).unwrap();
        let narrow = Dataset::new(array![[1.0, 2.0]], vec![0], 2).unwrap();
        let stats = fit_standardizer(&wide);
        assert!(matches!(
            stats.apply(&narrow),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_column_passes_through() {
        let d = Dataset::new(array![[5.0], [5.0], [5.0]], vec![0, 1, 0], 2).unwrap();
        let stats = fit_standardizer(&d);
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(stats.apply(&d).unwrap().features(), &array![[0.0], [0.0], [0.0]]);
    }

    fn balanced(n_per_class: usize, c: usize) -> Dataset {
        let n = n_per_class * c;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        Dataset::new(x, (0..n).map(|i| i % c).collect(), c).unwrap()
    }

    #[test]
    fn folds_balanced_example() {
        let d = balanced(5, 2);
        let plan = make_folds(&d, 5, 7).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        for f in 0..5 {
            let (_, test) = plan.split(f);
            let mut classes: Vec<usize> = test.iter().map(|&i| d.labels()[i]).collect();
            classes.sort();
            assert_eq!(classes, vec![0, 1]);
        }
        assert_eq!(plan, make_folds(&d, 5, 7).unwrap());
        assert!(matches!(make_folds(&d, 11, 7), Err(Error::FoldCount { k: 11, n: 10 })));
        assert!(make_folds(&d, 1, 7).is_err());
    }

    #[test]
    fn different_seeds_differ() {
        let d = balanced(20, 3);
        let a = make_folds(&d, 5, 1).unwrap();
        let b = make_folds(&d, 5, 2).unwrap();
        assert_ne!(a.assignment, b.assignment);
    }
}
