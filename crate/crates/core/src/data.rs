//! Prediction containers, softmax and the confidence score functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must be within this distance of 1; rows inside it are renormalized.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Dense row-major `n x k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty column count would panic
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Class-probability rows produced by a classifier, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    probs: Matrix,
    labels: Option<Vec<usize>>,
    name: String,
}

impl PredictionSet {
    /// Validates and, when needed, renormalizes `probs`.
    ///
    /// Entries must be finite and in `[0, 1]`; each row must sum to 1 within
    /// [`ROW_SUM_TOL`]. Labels, when given, must have one entry per row and
    /// index a valid class.
    pub fn new(probs: Matrix, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if probs.is_empty() {
            return Err(Error::invalid(format!("prediction set '{name}' is empty")));
        }
        let k = probs.cols();
        let mut probs = probs;
        for (i, row) in probs.data.chunks_exact_mut(k).enumerate() {
            let mut sum = 0.0;
            for &p in row.iter() {
                if !p.is_finite() || !(0.0..=1.0 + ROW_SUM_TOL).contains(&p) {
                    return Err(Error::invalid(format!(
                        "'{name}' row {i}: probability {p} outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "'{name}' row {i} sums to {sum}, not 1"
                )));
            }
            if sum != 1.0 {
                for p in row.iter_mut() {
                    *p = (*p / sum).min(1.0);
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != probs.rows() {
                return Err(Error::invalid(format!(
                    "'{name}' has {} rows but {} labels",
                    probs.rows(),
                    labels.len()
                )));
            }
            if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
                return Err(Error::invalid(format!(
                    "'{name}' label {y} at row {i} is not a class index below {k}"
                )));
            }
        }
        Ok(Self {
            probs,
            labels,
            name,
        })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.probs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        let name = std::mem::take(&mut self.name);
        Self::new(self.probs, Some(labels), name)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub(crate) fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::MissingLabels(format!("'{}' has no labels", self.name)))
    }

    /// Predicted class per row, ties resolved to the lowest index.
    pub fn predicted(&self) -> Vec<usize> {
        self.probs.iter_rows().map(argmax).collect()
    }

    /// Per-row `argmax == label`. Fails when the set is unlabeled.
    pub fn correctness(&self) -> Result<Vec<bool>> {
        let labels = self.require_labels()?;
        Ok(self
            .probs
            .iter_rows()
            .zip(labels)
            .map(|(row, &y)| argmax(row) == y)
            .collect())
    }

    pub fn mean_max_confidence(&self) -> f64 {
        let total: f64 = self.probs.iter_rows().map(max_of).sum();
        total / self.len() as f64
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = j;
        }
    }
    best
}

fn max_of(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    MaxConfidence,
    NegativeEntropy,
}

impl ScoreKind {
    pub fn score_row(self, row: &[f64]) -> f64 {
        match self {
            ScoreKind::MaxConfidence => max_of(row),
            ScoreKind::NegativeEntropy => row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, kind: ScoreKind) -> Self {
        Self { scores, kind }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Row-wise softmax of `logits / temperature`, stabilized by subtracting the row max.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Result<PredictionSet> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::invalid("logit matrix is empty"));
    }
    if let Some(bad) = logits.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite logit {bad}")));
    }
    let k = logits.cols();
    let mut out = Vec::with_capacity(logits.as_slice().len());
    for row in logits.iter_rows() {
        let m = max_of(row);
        let start = out.len();
        let mut sum = 0.0;
        for &z in row {
            let e = ((z - m) / temperature).exp();
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    PredictionSet::new(Matrix::new(logits.rows(), k, out)?, None, "")
}

pub fn score(preds: &PredictionSet, kind: ScoreKind) -> ScoreVector {
    let scores = preds.probs().iter_rows().map(|r| kind.score_row(r)).collect();
    ScoreVector { scores, kind }
}

/// Fraction of rows whose label differs from the tie-resolved argmax.
pub fn error_rate(preds: &PredictionSet) -> Result<f64> {
    let correct = preds.correctness()?;
    let wrong = correct.iter().filter(|&&c| !c).count();
    Ok(wrong as f64 / correct.len() as f64)
}
