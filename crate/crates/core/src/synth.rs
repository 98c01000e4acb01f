//! Seeded synthetic prediction sets with known calibration, and brute-force
//! reference implementations of ECE and temperature fitting.
//!
//! The oracles here deliberately share no code with `metrics` or `scaling`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::prediction::{ConfidenceMode, PredictionSet, ProbabilitySet};
use crate::scaling::{TEMPERATURE_MAX, TEMPERATURE_MIN};

/// Identifier of the random stream, recorded next to generated files.
pub const PRNG_ID: &str = "chacha20 (rand_chacha 0.9, seed_from_u64); beta: rand_distr 0.5";

const P_CLAMP: f64 = 1e-9;

/// Default spread of per-member log-odds noise in synthetic ensembles.
pub const DEFAULT_MEMBER_NOISE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_count: usize,
    pub seed: u64,
    /// 1 means perfectly calibrated; larger values are overconfident.
    pub true_temperature: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_count: 1000,
            seed: 0,
            true_temperature: 1.0,
            alpha: 2.0,
            beta: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn new(sample_count: usize, seed: u64, true_temperature: f64) -> Self {
        Self {
            sample_count,
            seed,
            true_temperature,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(CalibError::validation("sample count must be at least 1"));
        }
        check_true_temperature(self.true_temperature)?;
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(CalibError::validation(format!(
                "Beta parameters must be positive, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

fn check_true_temperature(t: f64) -> Result<()> {
    if !(TEMPERATURE_MIN..=TEMPERATURE_MAX).contains(&t) {
        return Err(CalibError::validation(format!(
            "true temperature {t} outside [{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]"
        )));
    }
    Ok(())
}

/// Draws `(log-odds, label)` pairs: p ~ Beta(α, β), label ~ Bernoulli(p).
fn draw_ground_truth(config: &SynthConfig) -> Result<Vec<(f64, usize)>> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let beta = Beta::new(config.alpha, config.beta)
        .map_err(|e| CalibError::validation(format!("Beta({}, {}): {e}", config.alpha, config.beta)))?;
    Ok((0..config.sample_count)
        .map(|_| {
            let p: f64 = beta.sample(&mut rng);
            let label = usize::from(rng.random::<f64>() < p);
            let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            ((p / (1.0 - p)).ln(), label)
        })
        .collect())
}

/// Binary set whose calibrated logits `(0, ln(p/(1-p)))` are multiplied by
/// `T_true`, so dividing by `T_true` restores calibration exactly.
pub fn generate(config: &SynthConfig) -> Result<PredictionSet> {
    let truth = draw_ground_truth(config)?;
    let t = config.true_temperature;
    let logits = truth.iter().flat_map(|&(l, _)| [0.0, l * t]).collect();
    let labels = truth.iter().map(|&(_, y)| y).collect();
    PredictionSet::from_flat(logits, 2, labels, format!("synth-seed{}-T{}", config.seed, t))
}

/// Ensemble members sharing one ground truth (same samples and labels).
///
/// Member `m` sees the true log-odds plus independent Gaussian noise with
/// standard deviation `member_noise` (its own disagreement with the other
/// members), then is made overconfident by `temperatures[m]`. With zero noise
/// every member is an exact rescaling of the same calibrated logits.
pub fn generate_ensemble(config: &SynthConfig, temperatures: &[f64], member_noise: f64) -> Result<Vec<PredictionSet>> {
    if temperatures.is_empty() {
        return Err(CalibError::validation("ensemble needs at least one member"));
    }
    for &t in temperatures {
        check_true_temperature(t)?;
    }
    if !(member_noise >= 0.0 && member_noise.is_finite()) {
        return Err(CalibError::validation(format!(
            "member noise {member_noise} must be finite and >= 0"
        )));
    }
    let truth = draw_ground_truth(config)?;
    let labels: Vec<usize> = truth.iter().map(|&(_, y)| y).collect();
    let noise = Normal::new(0.0, member_noise).expect("finite non-negative std");
    temperatures
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            rng.set_stream(m as u64 + 1);
            let logits = truth
                .iter()
                .flat_map(|&(l, _)| {
                    let eps = if member_noise > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    [0.0, (l + eps) * t]
                })
                .collect();
            PredictionSet::from_flat(logits, 2, labels.clone(), format!("member{m}"))
        })
        .collect()
}

/// `count` temperatures uniform in `[low, high)`.
pub fn random_temperatures(seed: u64, count: usize, low: f64, high: f64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(low..high)).collect()
}

/// Random K-class logits (standard normal times `scale`) with uniform labels.
pub fn random_prediction_set(seed: u64, sample_count: usize, class_count: usize, scale: f64) -> Result<PredictionSet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let logits = (0..sample_count * class_count)
        .map(|_| scale * normal.sample(&mut rng))
        .collect();
    let labels = (0..sample_count).map(|_| rng.random_range(0..class_count)).collect();
    PredictionSet::from_flat(logits, class_count, labels, format!("random-seed{seed}"))
}

/// Random probability rows (normalized exponential draws) with uniform labels.
pub fn random_probability_set(seed: u64, sample_count: usize, class_count: usize) -> Result<ProbabilitySet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(sample_count * class_count);
    for _ in 0..sample_count {
        let row: Vec<f64> = (0..class_count).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let sum: f64 = row.iter().sum();
        values.extend(row.iter().map(|v| v / sum));
    }
    let labels = (0..sample_count).map(|_| rng.random_range(0..class_count)).collect();
    ProbabilitySet::from_flat(values, class_count, labels)
}

/// Reference ECE: for every bin, scan every sample.
pub fn oracle_ece(probs: &ProbabilitySet, mode: ConfidenceMode, bins: usize) -> f64 {
    let k = probs.class_count();
    let n = probs.len();
    let values = probs.probabilities();
    let labels = probs.labels();

    let mut confidence = vec![0.0; n];
    let mut hit = vec![false; n];
    for i in 0..n {
        let row = &values[i * k..(i + 1) * k];
        match mode {
            ConfidenceMode::ChosenClass(c) => {
                confidence[i] = row[c];
                hit[i] = labels[i] == c;
            }
            ConfidenceMode::TopLabel => {
                let mut top = 0;
                for j in 1..k {
                    if row[j] > row[top] {
                        top = j;
                    }
                }
                confidence[i] = row[top];
                hit[i] = labels[i] == top;
            }
        }
    }

    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let (mut count, mut conf_sum, mut hits) = (0usize, 0.0, 0usize);
        for i in 0..n {
            let c = confidence[i];
            let inside = c >= lo && (c < hi || (b == bins - 1 && c <= 1.0));
            if inside {
                count += 1;
                conf_sum += c;
                if hit[i] {
                    hits += 1;
                }
            }
        }
        if count > 0 {
            let gap = (hits as f64 / count as f64 - conf_sum / count as f64).abs();
            total += count as f64 / n as f64 * gap;
        }
    }
    total
}

fn oracle_nll(set: &PredictionSet, temperature: f64) -> f64 {
    let k = set.class_count();
    let mut total = 0.0;
    for (i, &y) in set.labels().iter().enumerate() {
        let row = &set.logits()[i * k..(i + 1) * k];
        let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
        let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - scaled[y];
    }
    total / set.len() as f64
}

fn log10_grid(lo: f64, hi: f64, spacing: f64) -> impl Iterator<Item = f64> {
    let steps = ((hi - lo) / spacing).round() as usize;
    (0..=steps).map(move |i| lo + i as f64 * spacing)
}

fn grid_argmin(set: &PredictionSet, points: impl Iterator<Item = f64>) -> f64 {
    let mut best = (f64::NAN, f64::INFINITY);
    for log_t in points {
        let v = oracle_nll(set, 10f64.powf(log_t));
        if v < best.1 {
            best = (log_t, v);
        }
    }
    best.0
}

/// Exhaustive grid minimum of mean NLL over log10 T in [-3, 3].
pub fn oracle_fit_temperature(calibration: &PredictionSet, grid_spacing: f64) -> f64 {
    assert!(grid_spacing > 0.0, "grid spacing must be positive");
    let lo = TEMPERATURE_MIN.log10();
    let hi = TEMPERATURE_MAX.log10();
    10f64.powf(grid_argmin(calibration, log10_grid(lo, hi, grid_spacing)))
}

/// Two-stage grid search: exhaustive at `coarse_spacing`, then exhaustive at
/// `fine_spacing` within two coarse steps of the coarse minimum. Agrees with
/// [`oracle_fit_temperature`] whenever the NLL is unimodal in log T.
pub fn oracle_fit_temperature_refined(calibration: &PredictionSet, coarse_spacing: f64, fine_spacing: f64) -> f64 {
    assert!(
        coarse_spacing > 0.0 && fine_spacing > 0.0,
        "grid spacing must be positive"
    );
    let lo = TEMPERATURE_MIN.log10();
    let hi = TEMPERATURE_MAX.log10();
    let coarse = grid_argmin(calibration, log10_grid(lo, hi, coarse_spacing));
    let window = 2.0 * coarse_spacing;
    let start = ((coarse - window - lo) / fine_spacing).floor().max(0.0);
    let end = ((coarse + window - lo) / fine_spacing)
        .ceil()
        .min(((hi - lo) / fine_spacing).round());
    let fine = (start as usize..=end as usize).map(|i| lo + i as f64 * fine_spacing);
    10f64.powf(grid_argmin(calibration, fine))
}
