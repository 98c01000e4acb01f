//! Prediction and probability sets, softmax, argmax and confidence extraction.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`: row `i` occupies
//! `values[i * K..(i + 1) * K]`.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Absolute tolerance on probability row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Rows read from text whose sum is within this distance of 1 are renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Class index treated as "positive" / "chosen" for binary problems.
pub const DEFAULT_POSITIVE_CLASS: usize = 1;

/// N samples of K-class logits with their integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    logits: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
    name: String,
}

impl PredictionSet {
    /// Builds a set from a flat row-major logit buffer.
    pub fn from_flat(
        logits: Vec<f64>,
        class_count: usize,
        labels: Vec<usize>,
        name: impl Into<String>,
    ) -> Result<Self> {
        check_shape(logits.len(), class_count, &labels)?;
        if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
            return Err(CalibError::validation(format!(
                "non-finite logit {} at sample {}, class {}",
                logits[pos],
                pos / class_count,
                pos % class_count
            )));
        }
        Ok(Self {
            logits,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        let (flat, k) = flatten(rows)?;
        Self::from_flat(flat, k, labels, name)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.logits.chunks_exact(self.class_count)
    }

    /// Concatenates another set with the same class count after this one.
    pub fn concat(&self, other: &PredictionSet) -> Result<PredictionSet> {
        if other.class_count != self.class_count {
            return Err(CalibError::validation(format!(
                "cannot concatenate sets with {} and {} classes",
                self.class_count, other.class_count
            )));
        }
        let mut logits = self.logits.clone();
        logits.extend_from_slice(&other.logits);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            logits,
            labels,
            class_count: self.class_count,
            name: self.name.clone(),
        })
    }
}

/// N×K row-stochastic probabilities with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySet {
    probabilities: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl ProbabilitySet {
    /// Builds a set, requiring every row to sum to 1 within [`ROW_SUM_TOLERANCE`].
    pub fn from_flat(probabilities: Vec<f64>, class_count: usize, labels: Vec<usize>) -> Result<Self> {
        check_shape(probabilities.len(), class_count, &labels)?;
        for (i, row) in probabilities.chunks_exact(class_count).enumerate() {
            check_probability_row(i, row, ROW_SUM_TOLERANCE)?;
        }
        Ok(Self {
            probabilities,
            labels,
            class_count,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let (flat, k) = flatten(rows)?;
        Self::from_flat(flat, k, labels)
    }

    /// Like [`ProbabilitySet::from_flat`] but for values parsed from text:
    /// rows within [`RENORMALIZE_TOLERANCE`] of summing to 1 are rescaled,
    /// anything further off is rejected.
    pub fn from_flat_renormalized(mut probabilities: Vec<f64>, class_count: usize, labels: Vec<usize>) -> Result<Self> {
        check_shape(probabilities.len(), class_count, &labels)?;
        for (i, row) in probabilities.chunks_exact_mut(class_count).enumerate() {
            check_probability_row(i, row, RENORMALIZE_TOLERANCE)?;
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self {
            probabilities,
            labels,
            class_count,
        })
    }

    /// Internal constructor for values that are stochastic by construction.
    pub(crate) fn from_trusted(probabilities: Vec<f64>, class_count: usize, labels: Vec<usize>) -> Self {
        debug_assert_eq!(probabilities.len(), class_count * labels.len());
        Self {
            probabilities,
            labels,
            class_count,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probabilities.chunks_exact(self.class_count)
    }
}

/// Which probability a reliability diagram bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceMode {
    /// Probability assigned to one fixed class; frequency = share of that class.
    ChosenClass(usize),
    /// Probability of the predicted class; frequency = accuracy.
    TopLabel,
}

impl Default for ConfidenceMode {
    fn default() -> Self {
        ConfidenceMode::ChosenClass(DEFAULT_POSITIVE_CLASS)
    }
}

impl ConfidenceMode {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        match *self {
            ConfidenceMode::ChosenClass(c) if c >= class_count => Err(CalibError::validation(format!(
                "chosen class {c} outside [0, {class_count})"
            ))),
            _ => Ok(()),
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(CalibError::validation("softmax of an empty vector"));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(CalibError::validation(format!("non-finite logit {v}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, 1.0, &mut out);
    Ok(out)
}

/// softmax(logits / temperature) written into `out`; inputs assumed finite.
pub(crate) fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        // z == max gives exactly exp(0) = 1 even when scaled
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Row-wise softmax of a prediction set.
pub fn to_probabilities(set: &PredictionSet) -> ProbabilitySet {
    scaled_probabilities(set, 1.0)
}

pub(crate) fn scaled_probabilities(set: &PredictionSet, temperature: f64) -> ProbabilitySet {
    let k = set.class_count();
    let mut probs = vec![0.0; set.logits().len()];
    for (row, out) in set.rows().zip(probs.chunks_exact_mut(k)) {
        softmax_into(row, temperature, out);
    }
    ProbabilitySet::from_trusted(probs, k, set.labels().to_vec())
}

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn predicted_labels(probs: &ProbabilitySet) -> Vec<usize> {
    probs.rows().map(argmax).collect()
}

/// Per-sample confidence under `mode`.
pub fn confidences(probs: &ProbabilitySet, mode: ConfidenceMode) -> Result<Vec<f64>> {
    mode.validate(probs.class_count())?;
    Ok(match mode {
        ConfidenceMode::ChosenClass(c) => probs.rows().map(|r| r[c]).collect(),
        ConfidenceMode::TopLabel => probs.rows().map(|r| r[argmax(r)]).collect(),
    })
}

fn check_shape(values: usize, class_count: usize, labels: &[usize]) -> Result<()> {
    if class_count < 2 {
        return Err(CalibError::validation(format!(
            "need at least 2 classes, got {class_count}"
        )));
    }
    if labels.is_empty() {
        return Err(CalibError::validation("prediction set has no samples"));
    }
    if values != labels.len() * class_count {
        return Err(CalibError::validation(format!(
            "{} values do not form {} rows of {} classes",
            values,
            labels.len(),
            class_count
        )));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
        return Err(CalibError::validation(format!(
            "label {y} at sample {i} outside [0, {class_count})"
        )));
    }
    Ok(())
}

fn check_probability_row(i: usize, row: &[f64], tolerance: f64) -> Result<()> {
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CalibError::validation(format!(
            "probability {p} at sample {i} outside [0, 1]"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(CalibError::validation(format!(
            "probabilities of sample {i} sum to {sum}"
        )));
    }
    Ok(())
}

fn flatten(rows: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let k = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(CalibError::validation(format!(
            "row {i} has {} entries, expected {k}",
            rows[i].len()
        )));
    }
    Ok((rows.concat(), k))
}
