//! Per-example score vectors `f(x, ·)` with optional labels.

use crate::error::{Error, Result};

/// `N × K` matrix of scores, stored row-major, plus optional 0-based labels.
///
/// The induced classifier predicts the argmax of each row, breaking ties
/// toward the lowest label index. Scores may be infinite but never NaN;
/// infinite scores never win the argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    num_labels: usize,
    scores: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl ScoreTable {
    pub fn new(num_labels: usize, scores: Vec<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::Data(format!("need at least 2 labels, got {num_labels}")));
        }
        if !scores.len().is_multiple_of(num_labels) {
            return Err(Error::Data(format!(
                "{} scores do not form rows of width {num_labels}",
                scores.len()
            )));
        }
        let rows = scores.len() / num_labels;
        for (i, row) in scores.chunks(num_labels).enumerate() {
            if row.iter().any(|s| s.is_nan()) {
                return Err(Error::Data(format!("row {i} contains NaN")));
            }
            if !row.iter().any(|s| s.is_finite()) {
                return Err(Error::Data(format!("row {i} has no finite score")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != rows {
                return Err(Error::Data(format!(
                    "{} labels for {rows} score rows",
                    labels.len()
                )));
            }
            if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_labels) {
                return Err(Error::Data(format!("row {i}: label {y} out of range 0..{num_labels}")));
            }
        }
        Ok(Self { num_labels, scores, labels })
    }

    /// Table with no rows.
    pub fn empty(num_labels: usize, labeled: bool) -> Result<Self> {
        Self::new(num_labels, Vec::new(), labeled.then(Vec::new))
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.scores.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks(self.num_labels)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    /// Argmax of row `i`; ties go to the lowest index.
    pub fn predict(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    /// `f(x_i, y_i)` for every row.
    pub fn true_label_scores(&self) -> Result<Vec<f64>> {
        let labels = self.require_labels()?;
        Ok(labels.iter().enumerate().map(|(i, &y)| self.row(i)[y]).collect())
    }

    /// New table holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let k = self.num_labels;
        let mut scores = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            scores.extend_from_slice(self.row(i));
        }
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Self { num_labels: k, scores, labels }
    }

    /// Same scores with labels dropped.
    pub fn unlabeled(&self) -> Self {
        Self { num_labels: self.num_labels, scores: self.scores.clone(), labels: None }
    }

    pub fn raw_scores(&self) -> &[f64] {
        &self.scores
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut seen = false;
    for (k, &s) in row.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        if !seen || s > best_score {
            best = k;
            best_score = s;
            seen = true;
        }
    }
    best
}
