//! Prediction matrices, true labels and classifier weights.
//!
//! A prediction file is a UTF-8 CSV whose header is `y,h1,...,hN`; each data
//! row holds the true label followed by the N predicted labels. Labels are
//! 0-based integers taken literally (no remapping). A weights file is a JSON
//! array of N nonnegative reals.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sum;

/// Class identifier. Classes are `0..num_classes`.
pub type Label = u32;

/// Magnitude of the uniform jitter added to each weight by
/// [`EnsembleWeights::tie_free_perturb`].
pub const DEFAULT_PERTURBATION: f64 = 1e-4;

/// The empirical test distribution: `m` examples with true labels and the
/// predictions of `N` classifiers on each of them. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionDataset {
    num_classes: usize,
    num_classifiers: usize,
    true_labels: Vec<Label>,
    // row-major, m x N
    predictions: Vec<Label>,
}

impl PredictionDataset {
    /// Builds a dataset from per-example rows of predictions.
    ///
    /// The class count is `1 + max label` (at least 2) unless `declared_k` is
    /// given, in which case it must cover every observed label.
    pub fn from_rows(
        true_labels: Vec<Label>,
        rows: Vec<Vec<Label>>,
        declared_k: Option<usize>,
    ) -> Result<Self> {
        if rows.len() != true_labels.len() {
            return Err(Error::DimensionMismatch {
                what: "prediction rows",
                expected: true_labels.len(),
                found: rows.len(),
            });
        }
        let num_classifiers = rows.first().map_or(0, Vec::len);
        let mut predictions = Vec::with_capacity(rows.len() * num_classifiers);
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() != num_classifiers {
                return Err(Error::Parse {
                    row: j + 1,
                    column: None,
                    message: format!(
                        "expected {num_classifiers} predictions, found {}",
                        row.len()
                    ),
                });
            }
            predictions.extend(row);
        }
        Self::from_flat(true_labels, predictions, num_classifiers, declared_k)
    }

    /// Builds a dataset from per-classifier prediction vectors.
    pub fn from_columns(
        true_labels: Vec<Label>,
        columns: &[Vec<Label>],
        declared_k: Option<usize>,
    ) -> Result<Self> {
        let m = true_labels.len();
        for col in columns {
            if col.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "predictions per classifier",
                    expected: m,
                    found: col.len(),
                });
            }
        }
        let n = columns.len();
        let mut predictions = Vec::with_capacity(m * n);
        for j in 0..m {
            predictions.extend(columns.iter().map(|c| c[j]));
        }
        Self::from_flat(true_labels, predictions, n, declared_k)
    }

    fn from_flat(
        true_labels: Vec<Label>,
        predictions: Vec<Label>,
        num_classifiers: usize,
        declared_k: Option<usize>,
    ) -> Result<Self> {
        let m = true_labels.len();
        if m == 0 {
            return Err(Error::Validation("dataset has no examples".into()));
        }
        if num_classifiers == 0 {
            return Err(Error::Validation("dataset has no classifiers".into()));
        }
        debug_assert_eq!(predictions.len(), m * num_classifiers);

        let num_classes = match declared_k {
            Some(k) => {
                if k < 2 {
                    return Err(Error::InvalidParameter(format!(
                        "declared class count {k} is below 2"
                    )));
                }
                for (j, &y) in true_labels.iter().enumerate() {
                    check_label(y, k, j, || "y".to_string())?;
                    for (i, &p) in predictions[j * num_classifiers..(j + 1) * num_classifiers]
                        .iter()
                        .enumerate()
                    {
                        check_label(p, k, j, || format!("h{}", i + 1))?;
                    }
                }
                k
            }
            None => {
                let max = true_labels
                    .iter()
                    .chain(predictions.iter())
                    .copied()
                    .max()
                    .unwrap_or(0) as usize;
                (max + 1).max(2)
            }
        };

        Ok(Self {
            num_classes,
            num_classifiers,
            true_labels,
            predictions,
        })
    }

    pub fn num_examples(&self) -> usize {
        self.true_labels.len()
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn true_labels(&self) -> &[Label] {
        &self.true_labels
    }

    /// Predictions of every classifier on example `j`.
    pub fn row(&self, j: usize) -> &[Label] {
        &self.predictions[j * self.num_classifiers..(j + 1) * self.num_classifiers]
    }

    pub fn rows(&self) -> impl Iterator<Item = (Label, &[Label])> + '_ {
        self.true_labels
            .iter()
            .copied()
            .zip(self.predictions.chunks_exact(self.num_classifiers))
    }

    /// Predictions of classifier `i` on every example.
    pub fn column(&self, i: usize) -> impl Iterator<Item = Label> + '_ {
        self.predictions
            .iter()
            .skip(i)
            .step_by(self.num_classifiers)
            .copied()
    }

    /// Sub-ensemble made of the given classifier columns, in the given order.
    /// The class count is preserved.
    pub fn select_classifiers(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty classifier selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.num_classifiers) {
            return Err(Error::InvalidParameter(format!(
                "classifier index {bad} out of range for {} classifiers",
                self.num_classifiers
            )));
        }
        let mut predictions = Vec::with_capacity(self.num_examples() * indices.len());
        for (_, row) in self.rows() {
            predictions.extend(indices.iter().map(|&i| row[i]));
        }
        Ok(Self {
            num_classes: self.num_classes,
            num_classifiers: indices.len(),
            true_labels: self.true_labels.clone(),
            predictions,
        })
    }

    /// Parses the CSV prediction format from any reader.
    pub fn from_reader<R: Read>(reader: R, declared_k: Option<usize>) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let header: Vec<String> = csv
            .headers()
            .map_err(|e| csv_error(e, 0))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(Error::Validation("empty prediction file".into()));
        }
        if header.len() < 2 {
            return Err(Error::Parse {
                row: 0,
                column: None,
                message: "header needs a label column and at least one classifier column".into(),
            });
        }
        let n = header.len() - 1;

        let mut true_labels = Vec::new();
        let mut predictions = Vec::new();
        for (idx, record) in csv.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(|e| csv_error(e, row))?;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    row,
                    column: None,
                    message: format!("expected {} columns, found {}", header.len(), record.len()),
                });
            }
            for (c, field) in record.iter().enumerate() {
                let label: Label = field.parse().map_err(|_| Error::Parse {
                    row,
                    column: Some(header[c].clone()),
                    message: format!("`{field}` is not a nonnegative integer label"),
                })?;
                if c == 0 {
                    true_labels.push(label);
                } else {
                    predictions.push(label);
                }
            }
        }
        if true_labels.is_empty() {
            return Err(Error::Validation("prediction file has no data rows".into()));
        }

        Self::from_flat(true_labels, predictions, n, declared_k).map_err(|e| match e {
            // report the column name from the file header
            Error::OutOfRange {
                row,
                column,
                label,
                num_classes,
            } => {
                let column = if column == "y" {
                    header[0].clone()
                } else {
                    column[1..]
                        .parse::<usize>()
                        .ok()
                        .and_then(|i| header.get(i).cloned())
                        .unwrap_or(column)
                };
                Error::OutOfRange {
                    row,
                    column,
                    label,
                    num_classes,
                }
            }
            other => other,
        })
    }

    /// Writes the canonical CSV form: header `y,h1,...,hN`, one row per example.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::from("y");
        for i in 1..=self.num_classifiers {
            line.push_str(&format!(",h{i}"));
        }
        writeln!(out, "{line}")?;
        for (y, row) in self.rows() {
            line.clear();
            line.push_str(&y.to_string());
            for p in row {
                line.push(',');
                line.push_str(&p.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

fn check_label(label: Label, k: usize, example: usize, column: impl Fn() -> String) -> Result<()> {
    if (label as usize) < k {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            row: example + 1,
            column: column(),
            label,
            num_classes: k,
        })
    }
}

fn csv_error(err: csv::Error, row: usize) -> Error {
    let row = err
        .position()
        .map(|p| (p.record() as usize).max(row))
        .unwrap_or(row);
    Error::Parse {
        row,
        column: None,
        message: err.to_string(),
    }
}

/// Loads a prediction CSV from disk.
pub fn load_predictions(
    path: impl AsRef<Path>,
    declared_k: Option<usize>,
) -> Result<PredictionDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    PredictionDataset::from_reader(BufReader::new(file), declared_k)
}

/// Nonnegative classifier weights normalized to sum to one: the discrete
/// ensemble distribution over the dataset's classifiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleWeights {
    weights: Vec<f64>,
    perturbation_seed: Option<u64>,
}

impl EnsembleWeights {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "an ensemble needs at least one classifier");
        Self {
            weights: vec![1.0 / n as f64; n],
            perturbation_seed: None,
        }
    }

    /// Normalizes `raw` to sum to one.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Validation("weight vector is empty".into()));
        }
        if let Some((i, w)) = raw
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Validation(format!(
                "weight {} is {w}; weights must be finite and nonnegative",
                i + 1
            )));
        }
        let total = sum::sum(raw.iter().copied());
        if total <= 0.0 {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        Ok(Self {
            weights: raw.into_iter().map(|w| w / total).collect(),
            perturbation_seed: None,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: Vec<f64> = serde_json::from_str(text)?;
        Self::new(raw)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn perturbation_seed(&self) -> Option<u64> {
        self.perturbation_seed
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbation_seed.is_some()
    }

    /// All weights bitwise equal, i.e. the empirical distribution of the
    /// classifiers.
    pub fn is_uniform(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }

    /// [`tie_free_perturb_with`](Self::tie_free_perturb_with) at the default
    /// magnitude of `1e-4`.
    pub fn tie_free_perturb(&self, seed: u64) -> Self {
        self.tie_free_perturb_with(seed, DEFAULT_PERTURBATION)
            .expect("default magnitude is valid")
    }

    /// Adds i.i.d. `Uniform[0, magnitude)` jitter to every weight and
    /// renormalizes, so that no two disjoint classifier subsets carry exactly
    /// equal mass. Deterministic in `seed`.
    pub fn tie_free_perturb_with(&self, seed: u64, magnitude: f64) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "perturbation magnitude {magnitude} must be finite and nonnegative"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jittered: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w + rng.gen::<f64>() * magnitude)
            .collect();
        let total = sum::sum(jittered.iter().copied());
        Ok(Self {
            weights: jittered.into_iter().map(|w| w / total).collect(),
            perturbation_seed: Some(seed),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.weights).expect("f64 vectors serialize")
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.weights.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "classifier weights",
                expected: n,
                found: self.weights.len(),
            })
        }
    }
}

/// Reads a JSON weights file (an array of N reals).
pub fn load_weights(path: impl AsRef<Path>) -> Result<EnsembleWeights> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EnsembleWeights::from_json_str(&text)
}
