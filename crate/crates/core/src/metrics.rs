//! Error and calibration metrics: 0-1 error, F1, reliability diagrams,
//! ECE/MCE, NLL, Brier score and Pearson correlation.
//!
//! All reductions run sequentially in sample order so results are
//! bit-for-bit reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::PipelineMethod;
use crate::error::{CalibError, Result};
use crate::prediction::{argmax, predicted_labels, ConfidenceMode, ProbabilitySet};

/// Number of equal-width bins used unless overridden.
pub const DEFAULT_BINS: usize = 10;

/// Lower clamp applied to probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Fraction of predictions that differ from the true labels.
pub fn classification_error(true_labels: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(true_labels, predicted)?;
    let wrong = true_labels.iter().zip(predicted).filter(|(y, p)| y != p).count();
    Ok(wrong as f64 / true_labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// One-vs-rest confusion counts for `positive_class`.
pub fn confusion_counts(
    true_labels: &[usize],
    predicted: &[usize],
    positive_class: usize,
    class_count: usize,
) -> Result<ConfusionCounts> {
    check_lengths(true_labels, predicted)?;
    if positive_class >= class_count {
        return Err(CalibError::validation(format!(
            "positive class {positive_class} outside [0, {class_count})"
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&y, &p) in true_labels.iter().zip(predicted) {
        match (y == positive_class, p == positive_class) {
            (true, true) => counts.true_positive += 1,
            (false, true) => counts.false_positive += 1,
            (true, false) => counts.false_negative += 1,
            (false, false) => counts.true_negative += 1,
        }
    }
    Ok(counts)
}

/// Sørensen-Dice / F1 score, `2TP / (2TP + FP + FN)`.
///
/// With no positives predicted or present (TP = FP = FN = 0) the score is 1.
pub fn f1_score(counts: &ConfusionCounts) -> f64 {
    let tp2 = 2 * counts.true_positive;
    let denom = tp2 + counts.false_positive + counts.false_negative;
    if denom == 0 {
        1.0
    } else {
        tp2 as f64 / denom as f64
    }
}

/// One bin of a reliability diagram. `mean_confidence` and `frequency`
/// are `None` for empty bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub frequency: Option<f64>,
}

impl ReliabilityBin {
    /// |F - C| for an occupied bin.
    pub fn gap(&self) -> Option<f64> {
        Some((self.frequency? - self.mean_confidence?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<ReliabilityBin>,
    pub total_samples: usize,
    pub mode: ConfidenceMode,
}

impl ReliabilityDiagram {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn ece(&self) -> f64 {
        ece(self)
    }

    pub fn mce(&self) -> f64 {
        mce(self)
    }
}

/// Edges `0, 1/B, …, 1`.
pub fn bin_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

/// Left-closed bin index for a confidence in [0, 1]; 1.0 goes to the top bin.
///
/// Starts from `floor(c * B)` and corrects by one where rounding in the
/// product disagrees with the edge values `k / B`.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut idx = ((confidence * b).floor().max(0.0) as usize).min(bins - 1);
    if idx > 0 && confidence < idx as f64 / b {
        idx -= 1;
    } else if idx + 1 < bins && confidence >= (idx + 1) as f64 / b {
        idx += 1;
    }
    idx
}

pub fn build_reliability_diagram(
    probs: &ProbabilitySet,
    mode: ConfidenceMode,
    bins: usize,
) -> Result<ReliabilityDiagram> {
    if bins == 0 {
        return Err(CalibError::validation("bin count must be at least 1"));
    }
    mode.validate(probs.class_count())?;

    let mut counts = vec![0usize; bins];
    let mut conf_sums = vec![NeumaierSum::default(); bins];
    let mut hits = vec![0usize; bins];
    for (row, &y) in probs.rows().zip(probs.labels()) {
        let (confidence, hit) = match mode {
            ConfidenceMode::ChosenClass(c) => (row[c], y == c),
            ConfidenceMode::TopLabel => {
                let top = argmax(row);
                (row[top], y == top)
            }
        };
        let idx = bin_index(confidence, bins);
        counts[idx] += 1;
        conf_sums[idx].add(confidence);
        hits[idx] += usize::from(hit);
    }

    let edges = bin_edges(bins);
    let bins = (0..bins)
        .map(|i| {
            let n = counts[i];
            let (mean_confidence, frequency) = if n == 0 {
                (None, None)
            } else {
                (Some(conf_sums[i].total() / n as f64), Some(hits[i] as f64 / n as f64))
            };
            ReliabilityBin {
                lower: edges[i],
                upper: edges[i + 1],
                count: n,
                mean_confidence,
                frequency,
            }
        })
        .collect();
    Ok(ReliabilityDiagram {
        bin_edges: edges,
        bins,
        total_samples: probs.len(),
        mode,
    })
}

/// Expected calibration error: count-weighted mean gap over occupied bins.
pub fn ece(diagram: &ReliabilityDiagram) -> f64 {
    let n = diagram.total_samples as f64;
    diagram
        .bins
        .iter()
        .filter_map(|b| b.gap().map(|g| b.count as f64 / n * g))
        .sum()
}

/// Maximum calibration error: largest gap over occupied bins.
pub fn mce(diagram: &ReliabilityDiagram) -> f64 {
    diagram.bins.iter().filter_map(ReliabilityBin::gap).fold(0.0, f64::max)
}

/// Mean negative log-likelihood of the true class (probabilities floored at 1e-12).
pub fn nll(probs: &ProbabilitySet) -> f64 {
    let total: f64 = probs
        .rows()
        .zip(probs.labels())
        .map(|(row, &y)| -row[y].clamp(PROBABILITY_FLOOR, 1.0).ln())
        .sum();
    total / probs.len() as f64
}

/// Mean squared distance to the one-hot label, summed over classes.
pub fn brier(probs: &ProbabilitySet) -> f64 {
    let total: f64 = probs
        .rows()
        .zip(probs.labels())
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(k, &p)| {
                    let target = if k == y { 1.0 } else { 0.0 };
                    (p - target) * (p - target)
                })
                .sum::<f64>()
        })
        .sum();
    total / probs.len() as f64
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(CalibError::validation(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(CalibError::validation("correlation needs at least 2 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CalibError::UndefinedCorrelation(
            "one of the series has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Which procedure produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Pipeline(PipelineMethod),
    External,
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodTag::Pipeline(m) => m.fmt(f),
            MethodTag::External => f.write_str("external"),
        }
    }
}

impl FromStr for MethodTag {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "external" {
            Ok(MethodTag::External)
        } else {
            s.parse().map(MethodTag::Pipeline)
        }
    }
}

impl Serialize for MethodTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Metric bundle for one evaluated probability set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: MethodTag,
    pub error: f64,
    pub f1: Option<f64>,
    pub ece: f64,
    pub mce: f64,
    pub nll: f64,
    pub brier: f64,
    pub temperatures: Option<Vec<f64>>,
    pub bins: usize,
    pub n: usize,
}

/// Computes every metric for `probs`. F1 is included iff `positive_class` is given.
pub fn evaluate(
    probs: &ProbabilitySet,
    mode: ConfidenceMode,
    bins: usize,
    positive_class: Option<usize>,
) -> Result<CalibrationReport> {
    let predicted = predicted_labels(probs);
    let error = classification_error(probs.labels(), &predicted)?;
    let f1 = positive_class
        .map(|c| confusion_counts(probs.labels(), &predicted, c, probs.class_count()).map(|cc| f1_score(&cc)))
        .transpose()?;
    let diagram = build_reliability_diagram(probs, mode, bins)?;
    Ok(CalibrationReport {
        method: MethodTag::External,
        error,
        f1,
        ece: ece(&diagram),
        mce: mce(&diagram),
        nll: nll(probs),
        brier: brier(probs),
        temperatures: None,
        bins,
        n: probs.len(),
    })
}

/// Compensated summation; keeps bin means of repeated values exact.
#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CalibError::validation(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(CalibError::validation("no labels to compare"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary(class1: &[f64], labels: &[usize]) -> ProbabilitySet {
        let rows: Vec<Vec<f64>> = class1.iter().map(|&p| vec![1.0 - p, p]).collect();
        ProbabilitySet::from_rows(&rows, labels.to_vec()).unwrap()
    }

    #[test]
    fn classification_error_examples() {
        assert_eq!(classification_error(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(classification_error(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), 1.0);
        assert_eq!(classification_error(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.25);
        assert!(classification_error(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn confusion_and_f1() {
        let c = confusion_counts(&[1, 1, 0, 0], &[1, 0, 1, 0], 1, 2).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                true_positive: 1,
                false_positive: 1,
                false_negative: 1,
                true_negative: 1
            }
        );
        let c = confusion_counts(&[1, 1], &[1, 1], 1, 2).unwrap();
        assert_eq!((c.false_positive, c.false_negative), (0, 0));
        assert!(confusion_counts(&[1], &[1], 2, 2).is_err());

        let c = ConfusionCounts {
            true_positive: 2,
            false_positive: 1,
            false_negative: 1,
            true_negative: 0,
        };
        assert_abs_diff_eq!(f1_score(&c), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(
            f1_score(&ConfusionCounts {
                true_positive: 5,
                ..Default::default()
            }),
            1.0
        );
        assert_eq!(
            f1_score(&ConfusionCounts {
                false_positive: 3,
                false_negative: 1,
                ..Default::default()
            }),
            0.0
        );
        assert_eq!(
            f1_score(&ConfusionCounts {
                true_negative: 7,
                ..Default::default()
            }),
            1.0
        );
    }

    #[test]
    fn f1_ignores_true_negatives() {
        let mut c = ConfusionCounts {
            true_positive: 3,
            false_positive: 2,
            false_negative: 4,
            true_negative: 0,
        };
        let before = f1_score(&c);
        c.true_negative += 1_000_000;
        assert_eq!(f1_score(&c), before);
    }

    #[test]
    fn perfectly_calibrated_bin() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i < 80)).collect();
        let p = binary(&[0.8; 100], &labels);
        let d = build_reliability_diagram(&p, ConfidenceMode::ChosenClass(1), 10).unwrap();
        let occupied: Vec<_> = d.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert_abs_diff_eq!(occupied[0].mean_confidence.unwrap(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(occupied[0].frequency.unwrap(), 0.8, epsilon = 1e-12);
        assert_eq!(ece(&d), 0.0);
    }

    #[test]
    fn midpoint_and_upper_edge() {
        let p = binary(&[0.5, 0.5], &[1, 0]);
        let d = build_reliability_diagram(&p, ConfidenceMode::ChosenClass(1), 10).unwrap();
        assert_eq!(d.bins[5].count, 2);
        assert_eq!(d.bins[5].mean_confidence, Some(0.5));
        assert_eq!(d.bins[5].frequency, Some(0.5));

        let p = binary(&[1.0], &[1]);
        let d = build_reliability_diagram(&p, ConfidenceMode::ChosenClass(1), 10).unwrap();
        assert_eq!(d.bins[9].count, 1);
        assert_eq!(ece(&d), 0.0);
    }

    #[test]
    fn four_sample_fixture() {
        let p = binary(&[0.95, 0.85, 0.85, 0.30], &[1, 0, 1, 0]);
        let d = build_reliability_diagram(&p, ConfidenceMode::ChosenClass(1), 10).unwrap();
        let occupied: Vec<usize> = (0..10).filter(|&i| d.bins[i].count > 0).collect();
        assert_eq!(occupied, vec![3, 8, 9]);
        assert_abs_diff_eq!(ece(&d), 0.2625, epsilon = 1e-12);
        assert_abs_diff_eq!(mce(&d), 0.35, epsilon = 1e-12);

        let r = evaluate(&p, ConfidenceMode::ChosenClass(1), 10, Some(1)).unwrap();
        assert_abs_diff_eq!(r.ece, 0.2625, epsilon = 1e-12);
        assert_eq!(r.error, 0.25);
        assert_eq!(r.n, 4);
    }

    #[test]
    fn zero_bins_rejected() {
        let p = binary(&[0.5], &[1]);
        assert!(build_reliability_diagram(&p, ConfidenceMode::TopLabel, 0).is_err());
    }

    #[test]
    fn bin_index_edges() {
        for b in 1..50 {
            for k in 0..b {
                let edge = k as f64 / b as f64;
                assert_eq!(bin_index(edge, b), k, "edge {k}/{b}");
                if k > 0 {
                    let below = f64::from_bits(edge.to_bits() - 1);
                    assert_eq!(bin_index(below, b), k - 1, "below {k}/{b}");
                }
            }
            assert_eq!(bin_index(1.0, b), b - 1);
            assert_eq!(bin_index(0.0, b), 0);
        }
    }

    #[test]
    fn nll_examples() {
        let p = binary(&[1.0, 0.0], &[1, 0]);
        assert_eq!(nll(&p), 0.0);
        let p = binary(&[0.5, 0.5], &[1, 0]);
        assert_abs_diff_eq!(nll(&p), std::f64::consts::LN_2, epsilon = 1e-15);
        let p = binary(&[0.0], &[1]);
        assert_abs_diff_eq!(nll(&p), -(1e-12f64).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(nll(&p), 27.631, epsilon = 1e-3);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&binary(&[1.0, 0.0], &[1, 0])), 0.0);
        assert_eq!(brier(&binary(&[0.5, 0.5], &[1, 0])), 0.5);
        assert_eq!(brier(&binary(&[0.0, 1.0], &[1, 0])), 2.0);
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_abs_diff_eq!(pearson_correlation(&xs, &lin).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(pearson_correlation(&xs, &neg).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            pearson_correlation(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8,
            epsilon = 1e-12
        );
        assert!(matches!(
            pearson_correlation(&xs, &[1.0; 4]),
            Err(CalibError::UndefinedCorrelation(_))
        ));
        assert!(pearson_correlation(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn evaluate_perfect_binary() {
        let p = binary(&[1.0, 0.0, 1.0], &[1, 0, 1]);
        let r = evaluate(&p, ConfidenceMode::ChosenClass(1), 10, Some(1)).unwrap();
        assert_eq!(r.error, 0.0);
        assert_eq!(r.ece, 0.0);
        assert_eq!(r.f1, Some(1.0));
        assert_eq!(r.n, 3);
        let r = evaluate(&p, ConfidenceMode::ChosenClass(1), 10, None).unwrap();
        assert_eq!(r.f1, None);
    }

    #[test]
    fn method_tag_strings() {
        for s in ["I(0)", "I-C(3)", "E-M1", "E-M2", "E-M3", "external"] {
            let t: MethodTag = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!("I".parse::<MethodTag>().is_err());
        assert!("E-M4".parse::<MethodTag>().is_err());
    }
}
