//! Post-hoc calibrators fit by NLL minimization on a held-out set:
//! temperature scaling for K-class logits and Platt scaling for binary scores.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::prediction::{scaled_probabilities, PredictionSet, ProbabilitySet};

pub const TEMPERATURE_MIN: f64 = 1e-3;
pub const TEMPERATURE_MAX: f64 = 1e3;

/// Relative width at which the temperature search stops.
pub const TEMPERATURE_TOLERANCE: f64 = 1e-6;

pub const PLATT_MAX_ITERATIONS: usize = 100;
pub const PLATT_GRADIENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(default)]
    pub calibration_nll: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub converged: bool,
}

impl TemperatureModel {
    /// A model with a fixed temperature and no fit diagnostics.
    pub fn fixed(temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Self {
            temperature,
            calibration_nll: 0.0,
            iterations: 0,
            converged: true,
        })
    }

    pub fn apply(&self, set: &PredictionSet) -> Result<ProbabilitySet> {
        apply_temperature(set, self.temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub calibration_nll: f64,
    #[serde(default = "default_true")]
    pub converged: bool,
}

fn default_true() -> bool {
    true
}

/// Serialized form of a fitted calibrator:
/// `{"type":"temperature","T":…}` or `{"type":"platt","a":…,"b":…}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CalibratorModel {
    Temperature(TemperatureModel),
    Platt(PlattModel),
}

fn check_temperature(t: f64) -> Result<()> {
    if !(TEMPERATURE_MIN..=TEMPERATURE_MAX).contains(&t) {
        return Err(CalibError::validation(format!(
            "temperature {t} outside [{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]"
        )));
    }
    Ok(())
}

/// Row-wise softmax(z / T).
pub fn apply_temperature(set: &PredictionSet, temperature: f64) -> Result<ProbabilitySet> {
    check_temperature(temperature)?;
    Ok(scaled_probabilities(set, temperature))
}

/// Logits divided by T, for writing temperature-scaled prediction files.
pub fn scale_logits(set: &PredictionSet, temperature: f64) -> Result<PredictionSet> {
    check_temperature(temperature)?;
    let logits = set.logits().iter().map(|z| z / temperature).collect();
    PredictionSet::from_flat(logits, set.class_count(), set.labels().to_vec(), set.name())
}

/// Mean NLL of softmax(z / T) against the labels, via log-sum-exp.
pub fn temperature_nll(set: &PredictionSet, temperature: f64) -> f64 {
    mean_scaled_nll(set, 1.0 / temperature)
}

fn mean_scaled_nll(set: &PredictionSet, inverse_temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in set.rows().zip(set.labels()) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = row
            .iter()
            .map(|&z| ((z - max) * inverse_temperature).exp())
            .sum::<f64>()
            .ln();
        total += log_norm - (row[y] - max) * inverse_temperature;
    }
    total / set.len() as f64
}

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum {
    pub argmin: f64,
    pub minimum: f64,
    pub iterations: usize,
    /// The minimum lies within tolerance of `lower` or `upper`.
    pub at_boundary: bool,
}

/// Golden-section search for the minimum of a unimodal `f` on `[lower, upper]`.
///
/// Stops once the bracket is narrower than `tolerance * (upper - lower)`.
/// The endpoints are evaluated last so monotone functions report the exact
/// bound; a bound that ties the interior estimate wins.
pub fn minimize_scalar_convex<F>(mut f: F, lower: f64, upper: f64, tolerance: f64) -> Result<ScalarMinimum>
where
    F: FnMut(f64) -> f64,
{
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(CalibError::validation(format!(
            "invalid search interval [{lower}, {upper}]"
        )));
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(CalibError::validation(format!("tolerance {tolerance} not in (0, 1)")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CalibError::Optimization(format!("objective is {v} at {x}")))
        }
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let width = upper - lower;
    let stop = tolerance * width;
    let (mut a, mut b) = (lower, upper);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    let mut iterations = 0;
    while b - a > stop {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }

    let mid = 0.5 * (a + b);
    let mut best = (mid, eval(mid)?);
    for x in [lower, upper] {
        let v = eval(x)?;
        if v <= best.1 {
            best = (x, v);
        }
    }
    let (argmin, minimum) = best;
    Ok(ScalarMinimum {
        argmin,
        minimum,
        iterations,
        at_boundary: argmin - lower <= stop || upper - argmin <= stop,
    })
}

/// Fits T minimizing calibration-set NLL.
///
/// The search runs over log(1/T): NLL is convex in 1/T because it scales the
/// logits linearly, so the objective is unimodal in its logarithm.
pub fn fit_temperature(calibration: &PredictionSet) -> Result<TemperatureModel> {
    if calibration.len() < 2 {
        return Err(CalibError::validation(format!(
            "temperature fit needs at least 2 calibration samples, got {}",
            calibration.len()
        )));
    }
    let objective = |log_beta: f64| mean_scaled_nll(calibration, log_beta.exp());
    let lo = (1.0 / TEMPERATURE_MAX).ln();
    let hi = (1.0 / TEMPERATURE_MIN).ln();
    let found = minimize_scalar_convex(objective, lo, hi, TEMPERATURE_TOLERANCE)?;

    let temperature = if found.argmin == hi {
        TEMPERATURE_MIN
    } else if found.argmin == lo {
        TEMPERATURE_MAX
    } else {
        (-found.argmin).exp().clamp(TEMPERATURE_MIN, TEMPERATURE_MAX)
    };
    let mut model = TemperatureModel {
        temperature,
        calibration_nll: found.minimum,
        iterations: found.iterations,
        converged: !found.at_boundary,
    };
    // never return something worse than leaving the logits alone
    let at_one = mean_scaled_nll(calibration, 1.0);
    if at_one <= model.calibration_nll {
        model.temperature = 1.0;
        model.calibration_nll = at_one;
        model.converged = true;
    }
    Ok(model)
}

/// Class-1 score of a binary prediction set: z₁ − z₀.
pub fn binary_scores(set: &PredictionSet) -> Result<Vec<f64>> {
    if set.class_count() != 2 {
        return Err(CalibError::validation(format!(
            "Platt scaling needs 2 classes, got {}",
            set.class_count()
        )));
    }
    Ok(set.rows().map(|r| r[1] - r[0]).collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn platt_nll(scores: &[f64], labels: &[usize], a: f64, b: f64) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let u = a * s + b;
            if y == 1 {
                softplus(-u)
            } else {
                softplus(u)
            }
        })
        .sum();
    total / scores.len() as f64
}

/// Fits `sigmoid(a·s + b)` to binary labels by damped Newton iteration.
pub fn fit_platt(scores: &[f64], labels: &[usize]) -> Result<PlattModel> {
    if scores.len() != labels.len() {
        return Err(CalibError::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(CalibError::validation(format!("non-finite score {s}")));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(CalibError::validation(format!("Platt labels must be 0 or 1, got {y}")));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CalibError::validation(
            "Platt scaling needs both classes in the calibration labels",
        ));
    }

    let n = scores.len() as f64;
    let mut a = 0.0;
    let mut b = (positives as f64 / negatives as f64).ln();
    let mut loss = platt_nll(scores, labels, a, b);
    let mut converged = false;

    for _ in 0..PLATT_MAX_ITERATIONS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &y) in scores.iter().zip(labels) {
            let p = sigmoid(a * s + b);
            let r = p - y as f64;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let (ga, gb, haa, hab, hbb) = (ga / n, gb / n, haa / n, hab / n, hbb / n);
        if ga.hypot(gb) < PLATT_GRADIENT_TOLERANCE {
            converged = true;
            break;
        }

        let ridge = 1e-12 * (haa + hbb).max(1.0);
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 && det.is_finite() {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };

        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let (na, nb) = (a + step * da, b + step * db);
            let candidate = platt_nll(scores, labels, na, nb);
            if candidate <= loss {
                a = na;
                b = nb;
                loss = candidate;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    Ok(PlattModel {
        a,
        b,
        calibration_nll: loss,
        converged,
    })
}

/// Class-1 probabilities `sigmoid(a·s + b)`.
pub fn apply_platt(scores: &[f64], model: &PlattModel) -> Vec<f64> {
    scores.iter().map(|&s| sigmoid(model.a * s + model.b)).collect()
}

/// Platt-scaled binary probability set from a two-class prediction set.
pub fn apply_platt_to_set(set: &PredictionSet, model: &PlattModel) -> Result<ProbabilitySet> {
    let p1 = apply_platt(&binary_scores(set)?, model);
    let flat = p1.iter().flat_map(|&p| [1.0 - p, p]).collect();
    Ok(ProbabilitySet::from_trusted(flat, 2, set.labels().to_vec()))
}
